"""Command line driver: ``bellqkd run|validate|list-experiments``.

Exit codes: 0 success, 2 configuration error, 3 a key-rate solve did not
converge (all outputs are still written; affected rows carry an error).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import sys
from importlib import metadata
from pathlib import Path

import click
import yaml

from .config import ConfigError, ExperimentConfig, config_hash, load_config, resolved_dict
from .experiments import RunResult, describe, run_experiment

__all__ = ["main", "write_outputs", "EXIT_CONFIG", "EXIT_NONCONVERGENCE"]

EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3

log = logging.getLogger("bellqkd")


def _version() -> str:
    try:
        return metadata.version("bellqkd")
    except metadata.PackageNotFoundError:
        return "unknown"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


# Plot defaults per experiment: x column, y column, series column.
_PLOT_AXES = {
    "fbs_fidelity": ("theta_rad", "fidelity_tt", "eps_GHz"),
    "phase_surface": ("theta_rad", "phase_tt", "eps_GHz"),
    "bit_error_surface": ("theta_rad", "fidelity_tf", "eps_GHz"),
    "fbs_keyrate": ("theta_rad", "lower_bound", "protocol"),
    "loss_keyrate": ("loss_dB", "lower_bound", "protocol"),
    "mixed_theta": ("eps_GHz", "lower_bound", "protocol"),
    "dispersion_keyrate": (None, "lower_bound", "sigma_t_ps"),
    "optimize_encoding": (None, None, "sigma_t_ps"),
    "multi_fbs": ("theta_rad", "fidelity_tt", "n_pairs"),
    "deviations": (None, "fidelity_tt", "delta"),
    "alt_encoding": ("theta1_rad", "e_bit", "theta2_rad"),
}

_PLOT_TEMPLATE = '''"""Plot {stem}.csv; regenerate the data with: bellqkd run {stem}.resolved.yaml"""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

X, Y, SERIES = {x!r}, {y!r}, {series!r}
SURFACE = {surface!r}
LOG_Y = {log_y!r}

rows = list(csv.DictReader(open({csv_name!r}, newline="")))
rows = [r for r in rows if r[Y] != "" and r.get("window", "") == ""]
if SURFACE:
    # one panel per series value: colour map over (theta, phi)
    groups = defaultdict(list)
    for r in rows:
        groups[r[SERIES]].append(r)
    fig, axes = plt.subplots(1, len(groups), figsize=(4 * len(groups), 3.6), squeeze=False)
    for ax, (key, rs) in zip(axes[0], sorted(groups.items(), key=lambda kv: float(kv[0]))):
        sc = ax.tricontourf([float(r["theta_rad"]) for r in rs], [float(r["phi_rad"]) for r in rs],
                            [float(r[Y]) for r in rs], levels=50)
        fig.colorbar(sc, ax=ax)
        ax.set_title(f"{{SERIES}} = {{key}}")
        ax.set_xlabel("theta [rad]")
        ax.set_ylabel("phi [rad]")
else:
    fig, ax = plt.subplots(figsize=(6, 4))
    series = defaultdict(list)
    for r in rows:
        series[r[SERIES]].append((float(r[X]), float(r[Y])))
    for key, pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=f"{{SERIES}} = {{key}}")
    if LOG_Y:
        ax.set_yscale("log")
    ax.set_xlabel(X)
    ax.set_ylabel(Y)
    ax.legend()
fig.tight_layout()
fig.savefig({png_name!r}, dpi=150)
if "--show" in sys.argv:
    plt.show()
'''


def _plot_axes(cfg: ExperimentConfig, records: list[dict]) -> tuple[str, str, str, bool]:
    x, y, series = _PLOT_AXES[cfg.experiment.value]
    cols = list(records[0]) if records else []
    if x is None:
        x = next((c for c in cols if c.startswith("alpha")), "theta_rad")
    if y is None:
        y = "fidelity_tt" if "fidelity_tt" in cols else "lower_bound"
    surface = (cfg.experiment.value in ("fbs_fidelity", "phase_surface", "bit_error_surface")
               and len({r["phi_rad"] for r in records}) > 1)
    return x, y, series, surface


def write_outputs(cfg: ExperimentConfig, result: RunResult, out_dir: Path) -> dict[str, Path]:
    """CSV (RFC 4180), JSON lines, summary, resolved config and plot script."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = cfg.output.stem or cfg.experiment.value
    provenance = {"config_hash": config_hash(cfg), "code_version": _version()}
    records = [{**r, **provenance} for r in result.records]
    paths = {
        "csv": out_dir / f"{stem}.csv",
        "jsonl": out_dir / f"{stem}.jsonl",
        "config": out_dir / f"{stem}.resolved.yaml",
        "plot": out_dir / f"plot_{stem}.py",
        "summary": out_dir / f"{stem}.summary.json",
    }
    with open(paths["csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        if records:
            w.writerow(records[0].keys())
            w.writerows([_cell(v) for v in r.values()] for r in records)
    with open(paths["jsonl"], "w") as fh:
        for r in records:
            fh.write(json.dumps({k: _json_value(v) for k, v in r.items()}, sort_keys=False) + "\n")
    paths["config"].write_text(yaml.safe_dump(resolved_dict(cfg), sort_keys=False))
    summary = {"experiment": cfg.experiment.value, "points": len(records),
               "nonconverged": result.nonconverged, **provenance, **result.summary}
    paths["summary"].write_text(json.dumps(summary, indent=2) + "\n")
    x, y, series, surface = _plot_axes(cfg, result.records)
    paths["plot"].write_text(_PLOT_TEMPLATE.format(
        stem=stem, x=x, y=y, series=series, surface=surface,
        log_y=cfg.experiment.value == "loss_keyrate", csv_name=paths["csv"].name,
        png_name=f"{stem}.png"))
    return paths


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more log output.")
@click.version_option(_version(), prog_name="bellqkd")
def main(verbose: int) -> None:
    """Key-rate and channel-robustness sweeps for logical Bell-state QKD."""
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_or_exit(path: str) -> ExperimentConfig:
    try:
        return load_config(path)
    except ConfigError as exc:
        click.echo(f"config error in {path}: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


@main.command("list-experiments")
@click.option("--json", "as_json", is_flag=True, help="Emit a JSON array instead of a table.")
def list_experiments(as_json: bool) -> None:
    """List the named experiments."""
    rows = describe()
    if as_json:
        click.echo(json.dumps([{"name": n, "description": d} for n, d in rows], indent=2))
        return
    width = max(len(n) for n, _ in rows)
    for n, d in rows:
        click.echo(f"{n:<{width}}  {d}")


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True, help="Print the resolved config as JSON.")
def validate(config: str, as_json: bool) -> None:
    """Check CONFIG and print it with every default and unit resolved."""
    cfg = _load_or_exit(config)
    resolved = resolved_dict(cfg)
    if as_json:
        click.echo(json.dumps(resolved, indent=2))
    else:
        click.echo(yaml.safe_dump(resolved, sort_keys=False), nl=False)


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("-o", "--out-dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (overrides output.dir in the config).")
@click.option("-j", "--workers", type=click.IntRange(min=1), default=None,
              help="Worker processes (overrides workers in the config).")
def run(config: str, out_dir: str | None, workers: int | None) -> None:
    """Run the experiment described by CONFIG and write its datasets."""
    cfg = _load_or_exit(config)
    if workers is not None:
        cfg = cfg.model_copy(update={"workers": workers})
    target = Path(out_dir) if out_dir is not None else Path(cfg.output.dir)
    result = run_experiment(cfg)
    paths = write_outputs(cfg, result, target)
    failed = sum(1 for r in result.records if r["error"])
    click.echo(f"{cfg.experiment.value}: {len(result.records)} records -> {paths['csv']}")
    if failed:
        click.echo(f"{failed} records carry an error", err=True)
    if result.nonconverged:
        click.echo(f"{result.nonconverged} key-rate solves did not converge", err=True)
        sys.exit(EXIT_NONCONVERGENCE)


if __name__ == "__main__":
    main()
