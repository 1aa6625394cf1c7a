"""Cross-product experiment sweeps with a comparison table and bar charts.

All cells share the template's seed (common random numbers), so methods and
noise levels are compared on identical wind, noise and dropout draws, and a
single-cell sweep reproduces :func:`run_episode` exactly.
"""

from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..errors import ConfigError, PipevsError
from .config import ScenarioConfig, build_config
from .episode import run_episode

AXES = {
    "noise_sigma2": "noise_sigma2",
    "wind": "wind",
    "method": "method",
    "weights": "controller.weights",
}
CROSSWIND = {"mean": [0.0, 3.0, 0.0], "variance": 0.04}
TABLE_FIELDS = ["cell", "method", "scenario", "rmse_theta", "rmse_r", "completion", "crashed",
                "crash_reason", "termination", "mean_speed_error", "status"]


def _axis_value(axis: str, value):
    if axis == "wind" and value in ("on", True):
        return CROSSWIND
    if axis == "wind" and value in ("off", False, None):
        return "off"
    return value


def _label(value) -> str:
    if isinstance(value, dict):
        return "wind" if value else "off"
    if isinstance(value, (list, tuple)):
        return "(" + ",".join(str(v) for v in value) + ")"
    return str(value)


def sweep_cells(template: ScenarioConfig, axes: dict) -> list:
    """Expand the cross product into ``(index, method, scenario, overrides)``."""
    for axis in axes:
        if axis not in AXES:
            raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(AXES)}")
        if not axes[axis]:
            raise ConfigError(f"sweep axis {axis!r} has no values")
    names = list(axes)
    cells = []
    for i, combo in enumerate(itertools.product(*(axes[a] for a in names))):
        overrides = {AXES[a]: _axis_value(a, v) for a, v in zip(names, combo)}
        method = overrides.get("method", template.method)
        scenario = ",".join(f"{a}={_label(v)}" for a, v in zip(names, combo) if a != "method")
        cells.append((i, method, scenario or "base", overrides))
    return cells


def _run_cell(args):
    template_raw, index, method, scenario, overrides, out_dir, plots = args
    row = {"cell": index, "method": method, "scenario": scenario}
    try:
        cfg = build_config(template_raw).with_overrides(**overrides)
        cell_dir = Path(out_dir) / "cells" / f"{index:03d}"
        result = run_episode(cfg, out_dir=cell_dir, write=True, plots=plots)
        m = result.metrics.to_dict()
        row.update({k: m[k] for k in TABLE_FIELDS if k in m})
        row["status"] = "ok"
    except (PipevsError, ValueError) as exc:
        row.update({"status": "error", "crash_reason": f"{type(exc).__name__}: {exc}"})
    return row


def sweep(template: ScenarioConfig, axes: dict, out_dir, plots: bool = True,
          workers: int = 1) -> list:
    """Run every cell and write ``table.csv``, ``table.json`` and bar charts.

    A failing cell is recorded with ``status="error"`` and the sweep goes on.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(template.raw, i, m, sc, ov, str(out_dir), False)
            for i, m, sc, ov in sweep_cells(template, axes)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]

    with (out_dir / "table.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TABLE_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else repr(row[k])
                                 if isinstance(row.get(k), float) else row[k])
                             for k in TABLE_FIELDS if k in row})
    (out_dir / "table.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    if plots:
        from .plotting import plot_sweep
        plot_sweep(rows, out_dir)
    return rows
