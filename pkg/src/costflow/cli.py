"""Command line interface: validate | run | backfill | report | serve.

Exit codes are a stable contract: 0 success, 1 run failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import (
    ParseError,
    PipelineConfig,
    build_registry,
    derive_run_id,
    load_pipeline_file,
    parse_pipeline_text,
    time_range_filter,
    validate_pipeline_doc,
)
from .costs import comparison_metrics
from .engine import PartitionFilter, execute_run, plan_run
from .errors import ConfigError, EmptyRange, EmptySelection
from .recorded import recorded_reports
from .report import cost_report, render_cost_table
from .runstore import load_record, report_from_record
from .workload import RunWorkspace

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG = 2


@click.group()
def main() -> None:
    """Cost-aware multi-backend pipeline orchestration."""


def _load_config(path: str) -> PipelineConfig:
    p = Path(path)
    if not p.is_file():
        click.echo(f"error: file not found: {path}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        return load_pipeline_file(p)
    except ParseError as exc:
        where = f" (line {exc.line})" if exc.line else ""
        click.echo(f"error: parse failure{where}: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except ConfigError as exc:
        for problem in exc.problems:
            click.echo(f"invalid: {problem}", err=True)
        sys.exit(EXIT_CONFIG)


@main.command()
@click.argument("path", type=str)
def validate(path: str) -> None:
    """Validate a pipeline definition file; exit 0 iff it is usable."""
    p = Path(path)
    if not p.is_file():
        click.echo(f"error: file not found: {path}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        doc = parse_pipeline_text(p.read_text(encoding="utf-8"))
    except ParseError as exc:
        where = f" (line {exc.line})" if exc.line else ""
        click.echo(f"error: parse failure{where}: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    problems = validate_pipeline_doc(doc)
    if problems:
        for problem in problems:
            click.echo(f"invalid: {problem}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"ok: {path} is a valid pipeline definition")


def _execute(
    config: PipelineConfig,
    partitions: str | None,
    seed: int | None,
    runs_dir: str,
    report_out: str | None,
    patterns: list[str] | None = None,
):
    registry = build_registry(config)
    run_seed = config.seed if seed is None else seed
    if patterns is not None:
        selection = PartitionFilter(tuple(f"{t}" for t in patterns))
    else:
        selection = PartitionFilter.parse(partitions)
    try:
        plan = plan_run(config.graph, selection, config.policy, registry, config.name)
    except EmptySelection as exc:
        click.echo(f"error: EmptySelection: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    run_id = derive_run_id(config, run_seed, plan.selected_keys)
    workspace = RunWorkspace(Path(runs_dir) / run_id)
    record = execute_run(
        plan,
        registry,
        config.retry,
        run_seed,
        workspace,
        run_id=run_id,
        corpus_params=config.corpus_params(),
        max_concurrent=config.engine.max_concurrent,
    )
    table = render_cost_table([record.cost_report])
    click.echo(table)
    click.echo(
        f"run {record.run_id}: {record.run_state} "
        f"(total ${record.cost_report.aggregated_total_usd}, "
        f"surcharge ${record.cost_report.aggregated_surcharge_usd})"
    )
    click.echo(f"record: {workspace.record_path}")
    if report_out:
        Path(report_out).write_text(record.serialize(), encoding="utf-8")
        click.echo(f"copy:   {report_out}")
    return record


@main.command()
@click.argument("path", type=str)
@click.option("--partitions", default=None, help="Filter: 'TIME[/SEG]' patterns, comma separated.")
@click.option("--seed", type=int, default=None, help="Override the file's run seed.")
@click.option("--runs-dir", default="runs", envvar="COSTFLOW_RUNS_DIR", show_default=True)
@click.option("--report", "report_out", default=None, help="Also write the run record here.")
def run(path: str, partitions: str | None, seed: int | None, runs_dir: str,
        report_out: str | None) -> None:
    """Execute a pipeline and emit its run record and cost table."""
    config = _load_config(path)
    record = _execute(config, partitions, seed, runs_dir, report_out)
    sys.exit(EXIT_OK if record.run_state == "SUCCESS" else EXIT_RUN_FAILED)


@main.command()
@click.argument("path", type=str)
@click.option("--time-range", "time_range", required=True, help="Inclusive range 'START..END'.")
@click.option("--seed", type=int, default=None)
@click.option("--runs-dir", default="runs", envvar="COSTFLOW_RUNS_DIR", show_default=True)
@click.option("--report", "report_out", default=None)
def backfill(path: str, time_range: str, seed: int | None, runs_dir: str,
             report_out: str | None) -> None:
    """Launch one run covering every partition in a historical time range."""
    config = _load_config(path)
    start, sep, end = time_range.partition("..")
    if not sep:
        click.echo("error: --time-range must look like START..END", err=True)
        sys.exit(EXIT_CONFIG)
    ids = time_range_filter(config, start.strip(), end.strip())
    if not ids:
        click.echo(f"error: EmptyRange: no partitions in range {time_range!r}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        record = _execute(config, None, seed, runs_dir, report_out, patterns=ids)
    except EmptyRange as exc:  # defensive; time_range_filter already screens
        click.echo(f"error: EmptyRange: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    sys.exit(EXIT_OK if record.run_state == "SUCCESS" else EXIT_RUN_FAILED)


@main.command()
@click.option("--runs", "run_files", multiple=True, type=str, help="Run record JSON files.")
@click.option("--include-recorded", is_flag=True,
              help="Add the bundled recorded production runs to the set.")
@click.option("--compare", nargs=2, default=None, help="Two run ids to compare (A vs B).")
@click.option("--group-by", type=click.Choice(["asset", "platform"]), default="asset",
              show_default=True)
@click.option("--series-out", default=None, help="Write machine-readable chart series here.")
def report(run_files: tuple[str, ...], include_recorded: bool, compare, group_by: str,
           series_out: str | None) -> None:
    """Cost tables, grouped summaries, and run-to-run comparisons."""
    reports = []
    for f in run_files:
        p = Path(f)
        if not p.is_file():
            click.echo(f"error: file not found: {f}", err=True)
            sys.exit(EXIT_CONFIG)
        reports.append(report_from_record(load_record(p)))
    if include_recorded:
        reports.extend(recorded_reports())
    if not reports:
        click.echo("error: nothing to report: pass --runs or --include-recorded", err=True)
        sys.exit(EXIT_CONFIG)

    bundle = cost_report(reports, group_by=group_by)
    click.echo(render_cost_table(reports))
    click.echo("")
    click.echo(f"grouped by {group_by}:")
    for g in bundle.groups:
        point = g.as_series_point()
        click.echo(
            f"  {point['group']:<12} total ${point['total_usd']:>10}  "
            f"surcharge ${point['surcharge_usd']:>10}  "
            f"duration {point['duration_hours']:.2f}h"
        )
    if compare:
        a_id, b_id = compare
        by_id = {r.run_id: r for r in reports}
        missing = [rid for rid in (a_id, b_id) if rid not in by_id]
        if missing:
            click.echo(f"error: unknown run id(s): {', '.join(missing)}", err=True)
            sys.exit(EXIT_CONFIG)
        metrics = comparison_metrics(by_id[a_id], by_id[b_id])
        click.echo("")
        click.echo(f"compare {a_id} vs {b_id}:")
        click.echo(f"  cost_reduction_pct:  {metrics.cost_reduction_pct:.2f}")
        click.echo(f"  duration_delta_pct:  {metrics.duration_delta_pct:.2f}")
    if series_out:
        Path(series_out).write_text("\n".join(bundle.series_lines()) + "\n", encoding="utf-8")
        click.echo(f"series: {series_out}")


@main.command()
@click.argument("path", type=str)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8337, show_default=True)
@click.option("--runs-dir", default="runs", envvar="COSTFLOW_RUNS_DIR", show_default=True)
@click.option("--fixture", "fixtures", multiple=True, type=str,
              help="Pipeline files executed once at startup (repeatable).")
@click.option("--pace", type=float, default=None,
              help="Default virtual seconds advanced per wall second for new runs "
                   "(default: unpaced, runs finish immediately).")
@click.option("--ui-dir", default=None, help="Serve a built web UI from this directory at /ui.")
def serve(path: str, host: str, port: int, runs_dir: str, fixtures: tuple[str, ...],
          pace: float | None, ui_dir: str | None) -> None:
    """Serve the HTTP/JSON control-plane API for a pipeline."""
    import uvicorn

    from .api import create_app

    config = _load_config(path)
    app = create_app(
        config,
        runs_dir=Path(runs_dir),
        fixture_paths=[Path(f) for f in fixtures],
        default_pace=pace,
        ui_dir=Path(ui_dir) if ui_dir else None,
    )
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except SystemExit:
        raise
    except OSError as exc:
        click.echo(f"error: cannot bind {host}:{port}: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


if __name__ == "__main__":
    main()
