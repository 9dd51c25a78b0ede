import csv
import io
import json
import logging
import os
from typing import Iterable, Sequence

from pltower.shared.helpers import get_environment_config

cfg = get_environment_config()


class OutputFolder:
    logger = logging.getLogger("pltower.shared.outputs")

    def __init__(self, folder: str | None = None):
        self.folder = folder or cfg["outputs"]["folder"]
        os.makedirs(self.folder, exist_ok=True)

    def path(self, filename: str) -> str:
        return os.path.join(self.folder, filename)

    def write_text(self, filename: str, text: str) -> str:
        path = self.path(filename)
        with open(path, "w") as f:
            f.write(text)
        self.logger.debug("Wrote %s (%d bytes)", path, len(text))
        return path

    def write_json(self, filename: str, data: dict | list) -> str:
        # Dumping into string instead of the stream to prevent partial writes which corrupt the file
        out = json.dumps(data, indent=2, sort_keys=True)
        return self.write_text(filename, out + "\n")

    def write_csv(self, filename: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return self.write_text(filename, buffer.getvalue())
