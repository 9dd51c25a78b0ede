import os
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence, TypeVar

import yaml
from dotenv import load_dotenv

T = TypeVar("T")
ROOT = Path(__file__).resolve().parents[2]

load_dotenv(ROOT / ".env")


@lru_cache
def get_config(filename: str) -> dict:
    with open(ROOT / "config" / f"{filename}.yml", "r") as f:
        return yaml.safe_load(f)


def get_environment_config() -> dict:
    if not os.getenv("PLTOWER_PRODUCTION", ""):
        return get_config("environments/dev")
    else:
        return get_config("environments/production")


def get_numerics(section: str) -> dict:
    return get_config("numerics")[section]


def get_knot_budget(override: int | None = None) -> int:
    if override is not None:
        return int(override)
    if env_budget := os.getenv("PLTOWER_KNOT_BUDGET", ""):
        return int(env_budget)
    return int(get_numerics("knots")["budget"])


def partition(objects: Sequence[T], count: int, predicate: Callable[[T], int]) -> tuple[list[T], ...]:
    """Partition a list of objects into N lists based on a predicate."""
    results = tuple([[] for _ in range(count + 1)])
    for obj in objects:
        try:
            results[predicate(obj)].append(obj)
        except (TypeError, IndexError):
            results[-1].append(obj)

    return results
