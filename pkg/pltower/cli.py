import functools
import json
import logging
import os
import subprocess
import sys

import anyio
import anyio.to_process
import click

from pltower.models.reports import LinearizeReport
from pltower.models.specs import BatchJob, MapSpec
from pltower.shared import errors
from pltower.shared.helpers import get_config, get_environment_config

locale = get_config("localization")
logger = logging.getLogger("pltower.cli")


def load_map(spec: str):
    gallery = get_config("gallery")
    if spec in gallery:
        data = gallery[spec]
    elif os.path.isfile(spec):
        with open(spec, "r") as f:
            data = _parse_json(f.read())
    elif spec.lstrip().startswith(("{", "[")):
        data = _parse_json(spec)
    else:
        raise errors.ParseError(message=locale["cli"]["unknown_gallery"] % {"name": spec, "names": ", ".join(gallery)})

    try:
        return MapSpec.parse_obj(data).build()
    except errors.TowerError:
        raise
    except ValueError as e:
        # pydantic.ValidationError and out-of-range family parameters
        raise errors.ParseError(message=str(e))


def _parse_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise errors.ParseError(message=str(e))


def exit_codes(command):
    """Turns library errors into the process exit status."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except errors.TowerError as e:
            logger.debug("%s failed", command.__name__, exc_info=True)
            click.echo(str(e), err=True)
            sys.exit(e.exit_code)

    return wrapper


def output_folder(out: str | None):
    from pltower.shared.outputs import OutputFolder

    return OutputFolder(out)


def written(path: str):
    click.echo(locale["cli"]["written"] % {"path": path})


@click.group()
def cli():
    cfg = get_environment_config()["logging"]
    logging.basicConfig(level=cfg["level"], format=cfg["format"])


@cli.command()
@click.argument("map_spec")
@click.option("--out", default=None, help="Output folder")
@click.option("--name", default="linearize", help="Prefix of the output files")
@exit_codes
def linearize(map_spec: str, out: str | None, name: str):
    from pltower.shared.constant_slope import constant_slope_model, factor_homeomorphism
    from pltower.shared.pl_core import critical_values

    f = load_map(map_spec)
    model = constant_slope_model(critical_values(f))
    h = factor_homeomorphism(f, model.g)
    report = LinearizeReport(s=model.slope, turning=list(model.turning), g=model.g.to_dict(), h=h.to_dict())
    written(output_folder(out).write_json(f"{name}.json", report.dict()))


@cli.command()
@click.argument("map_spec")
@click.option("--iters", default=None, type=int, help="Maximum number of tower steps")
@click.option("--stop-tol", default=None, type=float, help="Stop when sup|f_(n+1) - f_n| drops below this")
@click.option("--knot-budget", default=None, type=int, help="Overrides PLTOWER_KNOT_BUDGET")
@click.option("--dump-maps", is_flag=True, help="Also write every f_n, g_n, h_n, H_n")
@click.option("--cross-check/--no-cross-check", default=True, help="Recompute H_n by the metric iteration")
@click.option("--out", default=None, help="Output folder")
@click.option("--name", default="tower", help="Prefix of the output files")
@exit_codes
def tower(
    map_spec: str,
    iters: int | None,
    stop_tol: float | None,
    knot_budget: int | None,
    dump_maps: bool,
    cross_check: bool,
    out: str | None,
    name: str,
):
    from pltower.models.reports import TowerRecord
    from pltower.shared.tower import run_tower, summarize

    if iters is not None and iters < 1:
        raise click.BadParameter("must be at least 1", param_hint="--iters")
    f = load_map(map_spec)
    trace = run_tower(f, iters, stop_tol, knot_budget, keep_maps=dump_maps)
    summary = summarize(f, trace, cross_check, knot_budget)

    folder = output_folder(out)
    written(folder.write_csv(f"{name}.trace.csv", TowerRecord.CSV_COLUMNS, [r.row() for r in trace.records]))
    written(folder.write_json(f"{name}.summary.json", summary.dict()))
    if dump_maps:
        written(folder.write_json(f"{name}.maps.json", trace.snapshots))

    if trace.converged:
        click.echo(locale["cli"]["converged"] % {"n": trace.iterations, "s": trace.s_final})
    else:
        residual = trace.min_residual if trace.min_residual is not None else float("nan")
        click.echo(
            locale["cli"]["not_converged"] % {"status": trace.status, "n": trace.iterations, "residual": residual}
        )
    if trace.oscillation_period:
        click.echo(locale["cli"]["oscillation"] % {"period": trace.oscillation_period})
    if trace.status == "knot_budget":
        sys.exit(errors.KnotBudgetExceeded.exit_code)


@cli.command()
@click.argument("map_spec")
@click.option("--method", type=click.Choice(["kneading", "hofbauer", "growth", "all"]), default="all")
@click.option("--out", default=None, help="Output folder")
@click.option("--name", default="entropy", help="Prefix of the output files")
@exit_codes
def entropy(map_spec: str, method: str, out: str | None, name: str):
    from pltower.shared.entropy import entropy_report

    report = entropy_report(load_map(map_spec), method)
    written(output_folder(out).write_json(f"{name}.json", report.dict()))


@cli.command()
@click.argument("experiment", type=click.Choice(["deg6", "renorm"]))
@click.option("--a", "a", default=0.4, help="deg6 parameter")
@click.option("--s", "s", default=1.3, help="Tent slope of the renormalizable experiment")
@click.option("--alpha", default=0.3, help="Weight of the first block")
@click.option("-n", "n", default=None, type=int, help="Number of steps (12 for deg6, 60 for renorm)")
@click.option("--out", default=None, help="Output folder")
@exit_codes
def counterexample(experiment: str, a: float, s: float, alpha: float, n: int | None, out: str | None):
    from pltower.shared.gallery import deg6_experiment, renorm_alpha_experiment

    folder = output_folder(out)
    if experiment == "deg6":
        report = deg6_experiment(a, 12 if n is None else n)
        rows = [(row.N, row.mass, row.expected) for row in report.rows]
        written(folder.write_csv("deg6.csv", ("N", "mass", "expected"), rows))
    else:
        report = renorm_alpha_experiment(s, alpha, 60 if n is None else n)
        rows = [
            ["" if value is None else value for value in (r.k, r.mass, r.closed_form, r.a_k, r.tower_H, r.fixed_point)]
            for r in report.rows
        ]
        written(folder.write_csv("renorm.csv", ("k", "mass", "closed_form", "a_k", "tower_H", "fixed_point"), rows))
    written(folder.write_json(f"{experiment}.json", report.dict()))
    click.echo("passed" if report.passed else "failed")


@cli.group()
def transfer():
    pass


@transfer.command()
@click.argument("map_spec")
@click.option("--out", default=None, help="Output folder")
@click.option("--name", default="spectrum", help="Prefix of the output files")
@exit_codes
def spectrum(map_spec: str, out: str | None, name: str):
    from pltower.shared.transfer import spectrum_report

    report = spectrum_report(load_map(map_spec))
    written(output_folder(out).write_json(f"{name}.json", report.dict(by_alias=True)))


@cli.command("gallery")
def list_gallery():
    for name, spec in get_config("gallery").items():
        click.echo(f"{name}: {json.dumps(spec, sort_keys=True)}")


def run_batch_entry(entry: dict) -> dict:
    """Runs one batch job. Module level so worker processes can import it."""
    from pltower.shared.entropy import entropy_report
    from pltower.shared.tower import run_tower, summarize

    raw = entry if isinstance(entry, dict) else {}
    result = {"name": str(raw.get("name", "job")), "command": raw.get("command", "tower")}
    try:
        job = BatchJob.parse_obj(entry)
        f = load_map(job.map_spec)
        if job.command == "tower":
            trace = run_tower(f, job.iters, job.stop_tol, job.knot_budget)
            summary = summarize(f, trace, job.cross_check, job.knot_budget)
            exit_code = errors.KnotBudgetExceeded.exit_code if trace.status == "knot_budget" else 0
            result.update(exit_code=exit_code, result=summary.dict(), trace=[r.row() for r in trace.records])
        else:
            result.update(exit_code=0, result=entropy_report(f, job.method).dict())
    except errors.TowerError as e:
        result.update(exit_code=e.exit_code, error=str(e))
    return result


async def _run_batch(entries: list[dict], jobs: int) -> list[dict]:
    limiter = anyio.CapacityLimiter(jobs)
    results: list[dict] = [{} for _ in entries]

    async def worker(index: int, entry: dict):
        results[index] = await anyio.to_process.run_sync(run_batch_entry, entry, limiter=limiter)

    async with anyio.create_task_group() as tg:
        for index, entry in enumerate(entries):
            tg.start_soon(worker, index, entry)
    return results


@cli.command()
@click.argument("specs_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--jobs", default=1, type=click.IntRange(min=1), help="Parallel worker processes")
@click.option("--out", default=None, help="Output folder")
@exit_codes
def batch(specs_file: str, jobs: int, out: str | None):
    from pltower.models.reports import TowerRecord

    with open(specs_file, "r") as f:
        entries = _parse_json(f.read())
    if not isinstance(entries, list):
        raise errors.ParseError(message="a batch file holds a list of jobs")

    if jobs == 1:
        results = [run_batch_entry(entry) for entry in entries]
    else:
        results = anyio.run(_run_batch, entries, jobs)

    folder = output_folder(out)
    for result in results:
        if trace := result.pop("trace", None):
            folder.write_csv(f"{result['name']}.trace.csv", TowerRecord.CSV_COLUMNS, trace)
    written(folder.write_json("batch.json", results))
    click.echo(locale["cli"]["batch_done"] % {"count": len(results), "jobs": jobs})
    if failures := [result["exit_code"] for result in results if result["exit_code"]]:
        sys.exit(max(failures))


@cli.command()
def cleanup():
    subprocess.run([sys.executable, "-m", "isort", "-l", "120", "--profile", "black", "."])
    subprocess.run([sys.executable, "-m", "black", "-l", "120", "."])


if __name__ == "__main__":
    cli()
