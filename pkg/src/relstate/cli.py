"""Command-line front end: ``relstate run | list-fixtures | validate``.

Exit status is 0 when every tolerance check passes, 2 when a check fails
and 1 on any error.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import click
import yaml

from . import _kernels, engines
from .errors import RelstateError
from .scenario import ScenarioError, evaluate, list_fixtures, load

EXIT_PASS, EXIT_ERROR, EXIT_TOLERANCE = 0, 1, 2


def _flatten(row: dict) -> dict:
    out = {}
    for key, value in row.items():
        if isinstance(value, complex):
            out[f"{key}_re"], out[f"{key}_im"] = float(value.real), float(value.imag)
        elif hasattr(value, "item") and not isinstance(value, (list, tuple)):
            out[key] = value.item()
        else:
            out[key] = value
    return out


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    return "" if value is None else str(value)


def rows_to_csv(rows: list[dict]) -> str:
    """CSV text with a stable column order (first appearance) and round-trip floats."""
    flat = [_flatten(r) for r in rows]
    columns: list[str] = []
    for r in flat:
        columns += [k for k in r if k not in columns]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in flat:
        writer.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, complex):
        return [_jsonable(value.real), _jsonable(value.imag)]
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _format_bound(bound) -> str:
    return f"[{bound[0]:.12g}, {bound[1]:.12g}]" if isinstance(bound, (list, tuple)) else f"<= {bound:.12g}"


def execute(name: str, overrides=(), label: str | None = None, out: str | None = None) -> tuple[int, str]:
    """Run a scenario and write its artifacts; return ``(exit status, summary text)``.

    The summary is one line at ``output.verbosity`` 1 (the default), empty at
    0, and adds every check and written file at 2.
    """
    scen = load(name, overrides)
    _kernels.apply_thread_cap()
    result = engines.run_task(scen.engine, scen.block, scen.seed)
    checks = evaluate(result.metrics, result.checks, scen.data.get("tolerances"))
    passed = all(c["passed"] for c in checks)
    label = label or scen.data.get("label") or time.strftime("%Y%m%dT%H%M%S")
    out_dir = Path(out or scen.output("directory", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / f"{scen.engine}_{label}"
    formats = scen.output("formats", ["csv", "json"])
    written = []
    if "csv" in formats:
        written.append(stem.with_suffix(".csv"))
        written[-1].write_text(rows_to_csv(result.rows))
    if "json" in formats:
        report = {"engine": scen.engine, "task": scen.block["task"], "seed": scen.seed, "backend": _kernels.BACKEND,
                  "metrics": result.metrics, "checks": checks, "passed": passed}
        written.append(stem.with_suffix(".json"))
        written[-1].write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    written.append(Path(f"{stem}.resolved.yaml"))
    written[-1].write_text(yaml.safe_dump(scen.data, sort_keys=False))
    head = result.headline or (checks[0]["metric"] if checks else "")
    parts = [f"{'PASS' if passed else 'FAIL'} {scen.engine}/{scen.block['task']}"]
    if head:
        parts.append(f"{head}={result.metrics[head]:.6g}")
    failed = [c for c in checks if not c["passed"]]
    for c in (failed or checks)[:3]:
        parts.append(f"{c['metric']}={c['value']:.6g} ({_format_bound(c['bound'])})")
    status = EXIT_PASS if passed else EXIT_TOLERANCE
    verbosity = int(scen.output("verbosity", 1))
    if verbosity == 0:
        return status, ""
    lines = ["  ".join(parts)]
    if verbosity >= 2:
        lines += [f"  {'ok  ' if c['passed'] else 'FAIL'} {c['metric']}={c['value']!r} ({_format_bound(c['bound'])})"
                  for c in checks]
        lines += [f"  wrote {p}" for p in written]
    return status, "\n".join(lines)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Relative-state quantum mechanics scenarios."""


@main.command()
@click.argument("scenario")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a scenario field (dotted key).")
@click.option("--label", default=None, help="Name used in output files instead of a timestamp.")
@click.option("--out", default=None, type=click.Path(file_okay=False), help="Output directory.")
def run(scenario, overrides, label, out):
    """Run SCENARIO (a file or a shipped fixture name)."""
    try:
        status, summary = execute(scenario, overrides, label, out)
    except ScenarioError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    except RelstateError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    if summary:
        click.echo(summary)
    sys.exit(status)


@main.command("list-fixtures")
def list_fixtures_cmd():
    """List the shipped fixtures."""
    for name, desc in list_fixtures().items():
        click.echo(f"{name:28s} {desc}")


@main.command("validate")
@click.argument("scenario")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
def validate_cmd(scenario, overrides):
    """Check SCENARIO against the schema without running it."""
    try:
        scen = load(scenario, overrides)
    except ScenarioError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    click.echo(f"ok {scen.source} ({scen.engine}/{scen.block['task']})")
