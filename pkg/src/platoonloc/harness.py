"""Experiment orchestration: seeded sweeps, metric aggregation, file output.

Each (method, sweep value, seed) cell re-synthesizes the identical scene
from its seed, so every row of the result table is reproducible in
isolation and methods are compared on paired data.
"""

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import run_method_on_scene
from .channel import synthesize_scene
from .config import ExperimentSpec, ScenarioConfig, dump_spec, emit_spec
from .errors import EmptyDataError, SchemaError

CSV_COLUMNS = [
    "method",
    "sweep_axis",
    "sweep_value",
    "seed",
    "slot",
    "rmse",
    "iterations",
    "converged",
]


def compute_rmse(estimates: np.ndarray, truths: np.ndarray) -> float:
    """Root-mean-square position error over all axes of the estimate array."""
    estimates = np.asarray(estimates, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if estimates.shape != truths.shape:
        raise ValueError(f"shape mismatch {estimates.shape} vs {truths.shape}")
    err2 = np.sum((estimates - truths) ** 2, axis=-1)
    return float(np.sqrt(err2.mean()))


def cdf_table(values) -> list[tuple[float, float]]:
    """Empirical distribution: sorted (value, cumulative fraction) pairs."""
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size == 0:
        raise EmptyDataError("cdf of an empty sample")
    n = vals.size
    return [(float(v), (i + 1) / n) for i, v in enumerate(vals)]


def apply_sweep(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    """Scenario variant for one sweep point."""
    if axis == "none":
        return cfg
    if axis == "N":
        side = int(round(np.sqrt(value)))
        if side * side != int(value):
            raise SchemaError("sweep.values", f"N={value} is not a square element count")
        return replace(cfg, n_ris_h=side, n_ris_v=side)
    if axis == "nlos_paths":
        nl = replace(cfg.nlos, l_bs=int(value), l_ris=int(value))
        return replace(cfg, nlos=nl)
    if axis == "grid_length":
        return replace(cfg, grid_length=float(value))
    if axis == "slot_interval":
        return replace(cfg, slot_interval=float(value))
    raise SchemaError("sweep.axis", f"unknown axis {axis!r}")


@dataclass
class MetricTable:
    """Per-(method, sweep, seed, slot) metrics plus distribution summaries."""

    rows: list[dict] = field(default_factory=list)
    runtimes: list[dict] = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    def aggregates(self) -> list[dict]:
        groups: dict[tuple, list[float]] = {}
        for r in self.rows:
            if r["rmse"] is None:
                continue
            groups.setdefault((r["method"], r["sweep_value"]), []).append(r["rmse"])
        out = []
        for (method, sweep_value), vals in sorted(groups.items(), key=str):
            out.append(
                {
                    "method": method,
                    "sweep_value": sweep_value,
                    "mean_rmse": float(np.sqrt(np.mean(np.square(vals)))),
                    "cdf": cdf_table(vals),
                }
            )
        return out

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(
                [
                    r["method"],
                    r["sweep_axis"],
                    _fmt(r["sweep_value"]),
                    r["seed"],
                    r["slot"],
                    _fmt(r["rmse"]),
                    "" if r.get("iterations") is None else r["iterations"],
                    "" if r.get("converged") is None else int(bool(r["converged"])),
                ]
            )
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    return f"{float(v):.10g}"


def run_experiment(spec: ExperimentSpec, out_dir: str | None = None) -> MetricTable:
    """Execute every (method, sweep value, seed) cell of an experiment.

    Writes results.csv, results.json, and config-echo.json when out_dir is
    given. A failing method is recorded on its rows and the run continues.
    Output bytes depend only on the spec.
    """
    out_dir = out_dir or spec.out_dir
    table = MetricTable()
    sweep_values = spec.sweep_values if spec.sweep_axis != "none" else [None]
    for sweep_value in sweep_values:
        cfg = (
            spec.scenario
            if sweep_value is None
            else apply_sweep(spec.scenario, spec.sweep_axis, sweep_value)
        )
        for seed in spec.seeds:
            scene = synthesize_scene(cfg, seed=seed)
            truths = scene.trajectory.positions
            for method in spec.methods:
                t0 = time.perf_counter()
                try:
                    est, iters, conv = run_method_on_scene(method, scene)
                    err = np.sqrt(np.sum((est - truths) ** 2, axis=2).mean(axis=1))
                    for t in range(cfg.n_slots):
                        table.add(
                            method=method,
                            sweep_axis=spec.sweep_axis,
                            sweep_value=sweep_value,
                            seed=seed,
                            slot=t,
                            rmse=float(err[t]),
                            iterations=int(iters[t]),
                            converged=bool(conv[t]),
                        )
                except Exception as exc:  # record the failure, keep sweeping
                    for t in range(cfg.n_slots):
                        table.add(
                            method=method,
                            sweep_axis=spec.sweep_axis,
                            sweep_value=sweep_value,
                            seed=seed,
                            slot=t,
                            rmse=None,
                            iterations=None,
                            converged=None,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                table.runtimes.append(
                    {
                        "method": method,
                        "sweep_value": sweep_value,
                        "seed": seed,
                        "runtime_s": time.perf_counter() - t0,
                    }
                )
    if out_dir:
        write_outputs(spec, table, out_dir)
    return table


def write_outputs(spec: ExperimentSpec, table: MetricTable, out_dir: str):
    """results.csv (deterministic), results.json (with runtimes), config echo."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(table.to_csv_text())
    payload = {
        "spec": emit_spec(spec),
        "rows": table.rows,
        "aggregates": table.aggregates(),
        "runtimes_s": table.runtimes,  # wall-clock; excluded from results.csv
    }
    with open(os.path.join(out_dir, "results.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    dump_spec(spec, os.path.join(out_dir, "config-echo.json"))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")
