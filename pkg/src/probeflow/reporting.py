"""Reconstruction metrics, CSV exports, and the staged-vs-naive benchmark.

The headline metric is a normalized L2 error between the learned density
surface and the reference solver field, restricted to the region the probe
fleet actually covered (between the first and last true trajectories) and
split into an early transient window and the remainder of the horizon.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .agents import AgentTrajectories, integrate_trajectories
from .errors import GeometryError
from .flux import Greenshields
from .godunov import DensityField, Domain, ScenarioSpec, simulate
from .model import ReconstructionModel
from .networks import density_values, trajectory_state
from .sensing import NoiseConfig, measure, sample_collocation
from .training import TrainOptions, naive_train, staged_train

EARLY_FRACTION = 0.2   # the transient window is t < EARLY_FRACTION * t_max


@dataclass
class EvalReport:
    """Normalized reconstruction errors split by region and time window."""

    error_total: float
    error_inside: float
    error_inside_early: float
    error_inside_late: float
    error_outside: float
    error_outside_early: float
    error_outside_late: float
    trajectory_rmse: float
    inside_fraction: float
    viscosity: float
    meas_bias: list[float]

    @property
    def generalization_error(self) -> float:
        """Headline number: covered region, transient window excluded."""
        return self.error_inside_late

    def to_dict(self) -> dict:
        return {
            "error_total": self.error_total,
            "error_inside": self.error_inside,
            "error_inside_early": self.error_inside_early,
            "error_inside_late": self.error_inside_late,
            "error_outside": self.error_outside,
            "error_outside_early": self.error_outside_early,
            "error_outside_late": self.error_outside_late,
            "generalization_error": self.generalization_error,
            "trajectory_rmse": self.trajectory_rmse,
            "inside_fraction": self.inside_fraction,
            "viscosity": self.viscosity,
            "meas_bias": list(self.meas_bias),
        }


def _normalized_error(pred: np.ndarray, truth: np.ndarray,
                      mask: np.ndarray) -> float:
    if not np.any(mask):
        return float("nan")
    num = float(np.sum((pred[mask] - truth[mask]) ** 2))
    den = float(np.sum(truth[mask] ** 2))
    if den == 0.0:
        return float("nan") if num == 0.0 else float("inf")
    return float(np.sqrt(num / den))


def predict_grid(model: ReconstructionModel, domain: Domain) -> np.ndarray:
    """Learned density on the solver grid, shaped like DensityField.values."""
    times = domain.times()
    xs = domain.cell_centers()
    tt = np.repeat(times, xs.size)
    xx = np.tile(xs, times.size)
    vals = density_values(model.density_net, model.std, tt, xx)
    return np.asarray(vals, dtype=np.float64).reshape(times.size, xs.size)


def coverage_mask(domain: Domain, traj: AgentTrajectories) -> np.ndarray:
    """Boolean grid mask of points between the first and last trajectories."""
    xs = domain.cell_centers()
    first = traj.positions[:, 0][:, None]
    last = traj.positions[:, -1][:, None]
    return (xs[None, :] >= first) & (xs[None, :] <= last)


def evaluate_model(model: ReconstructionModel, field: DensityField,
                   traj: AgentTrajectories) -> EvalReport:
    """Score a trained model against the reference field and trajectories.

    The trajectories must be sampled on the field's time grid (as produced
    by integrate_trajectories on the same field).
    """
    domain = field.domain
    times = domain.times()
    pred = predict_grid(model, domain)
    truth = field.values
    inside = coverage_mask(domain, traj)
    if not np.any(inside):
        raise GeometryError("agent envelope contains no grid points; "
                            "errors inside the covered region are undefined")
    early = (times < EARLY_FRACTION * domain.t_max)[:, None]
    early = np.broadcast_to(early, truth.shape)

    pos_pred, _ = trajectory_state(model.trajectory_net, model.std, times)
    rmse = float(np.sqrt(np.mean((np.asarray(pos_pred) - traj.positions) ** 2)))

    return EvalReport(
        error_total=_normalized_error(pred, truth, np.ones_like(inside)),
        error_inside=_normalized_error(pred, truth, inside),
        error_inside_early=_normalized_error(pred, truth, inside & early),
        error_inside_late=_normalized_error(pred, truth, inside & ~early),
        error_outside=_normalized_error(pred, truth, ~inside),
        error_outside_early=_normalized_error(pred, truth, ~inside & early),
        error_outside_late=_normalized_error(pred, truth, ~inside & ~early),
        trajectory_rmse=rmse,
        inside_fraction=float(np.mean(inside)),
        viscosity=float(model.viscosity),
        meas_bias=[float(b) for b in model.meas_bias],
    )


def _write_grid_csv(path: str, domain: Domain, grid: np.ndarray) -> None:
    times = domain.times()
    xs = domain.cell_centers()
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_center"] + [repr(float(t)) for t in times])
        for j, x in enumerate(xs):
            writer.writerow([repr(float(x))] +
                            [repr(float(grid[i, j])) for i in range(times.size)])


def export_density_grid(model: ReconstructionModel, domain: Domain,
                        path: str) -> None:
    """Write the learned density surface on the solver grid as CSV."""
    _write_grid_csv(path, domain, predict_grid(model, domain))


def export_error_heatmap(model: ReconstructionModel, field: DensityField,
                         path: str) -> None:
    """Write |learned - reference| on the solver grid as CSV."""
    grid = np.abs(predict_grid(model, field.domain) - field.values)
    _write_grid_csv(path, field.domain, grid)


def export_trajectory_overlay(model: ReconstructionModel,
                              traj: AgentTrajectories, path: str) -> None:
    """Write true and learned trajectories side by side as CSV."""
    times = traj.times
    pos_pred, _ = trajectory_state(model.trajectory_net, model.std, times)
    pos_pred = np.asarray(pos_pred)
    n = traj.n_agents
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"true_{i + 1}" for i in range(n)] +
                        [f"model_{i + 1}" for i in range(n)])
        for i, t in enumerate(times):
            writer.writerow([repr(float(t))] +
                            [repr(float(v)) for v in traj.positions[i]] +
                            [repr(float(v)) for v in pos_pred[i]])


# ---------------------------------------------------------------------------
# Paired benchmark
# ---------------------------------------------------------------------------

def _benchmark_worker(payload: dict) -> dict:
    """One benchmark run: fresh dataset, then one training per mode.

    Both modes see the identical measurement set, so differences isolate
    the curriculum. Runs in a worker process; everything is rebuilt from
    plain picklable values. Failures are reported, not raised.
    """
    index = payload["index"]
    try:
        scenario = ScenarioSpec.from_dict(payload["scenario"])
        domain = Domain(**payload["domain"])
        field = simulate(scenario, domain)
        model_flux = Greenshields(scenario.v_f)
        traj = integrate_trajectories(model_flux, field,
                                      np.asarray(payload["y0"], dtype=np.float64))
        noise = NoiseConfig.from_dict(payload["noise"])
        ms = measure(field, traj, payload["n_data"], noise)
        ms = sample_collocation(ms, payload["n_f"], payload["n_g"],
                                seed=payload["colloc_seed"])
        options = TrainOptions(**payload["options"])
        results = {}
        for mode in payload["modes"]:
            trainer = staged_train if mode == "staged" else naive_train
            t0 = time.perf_counter()
            model, report = trainer(ms, options, seed=payload["train_seed"])
            seconds = time.perf_counter() - t0
            ev = evaluate_model(model, field, traj)
            results[mode] = {
                "generalization_error": ev.generalization_error,
                "error_inside": ev.error_inside,
                "error_total": ev.error_total,
                "trajectory_rmse": ev.trajectory_rmse,
                "final_loss": report.final_loss,
                "seconds": seconds,
            }
        return {"index": index, "ok": True, "results": results}
    except Exception as exc:  # noqa: BLE001 - per-run failures must not kill the sweep
        return {"index": index, "ok": False,
                "message": f"{type(exc).__name__}: {exc}"}


@dataclass
class BenchmarkResult:
    """Aggregated sweep outcome; failed runs are kept but excluded from stats."""

    runs: list[dict]
    modes: list[str]

    def successful(self) -> list[dict]:
        return [r for r in self.runs if r["ok"]]

    def errors(self, mode: str) -> np.ndarray:
        return np.array([r["results"][mode]["generalization_error"]
                         for r in self.successful()], dtype=np.float64)

    def seconds(self, mode: str) -> np.ndarray:
        return np.array([r["results"][mode]["seconds"]
                         for r in self.successful()], dtype=np.float64)

    def stats(self) -> dict:
        out: dict = {"n_runs": len(self.runs),
                     "n_failed": sum(not r["ok"] for r in self.runs),
                     "modes": {}}
        for mode in self.modes:
            errs = self.errors(mode)
            secs = self.seconds(mode)
            out["modes"][mode] = {
                "error_mean": float(np.mean(errs)) if errs.size else None,
                "error_median": float(np.median(errs)) if errs.size else None,
                "error_std": float(np.std(errs)) if errs.size else None,
                "seconds_mean": float(np.mean(secs)) if secs.size else None,
            }
        if {"staged", "naive"} <= set(self.modes):
            staged = self.errors("staged")
            naive = self.errors("naive")
            if staged.size and naive.size and np.median(staged) > 0:
                out["median_error_ratio_naive_over_staged"] = float(
                    np.median(naive) / np.median(staged))
        return out

    def to_dict(self) -> dict:
        return {"runs": self.runs, "modes": self.modes, "stats": self.stats()}


def benchmark(scenario: ScenarioSpec, domain: Domain, y0: np.ndarray,
              n_data: int, n_f: int, n_g: int, noise: NoiseConfig,
              options: TrainOptions, train_seed: int, n_runs: int,
              modes: tuple = ("staged", "naive"),
              processes: int | None = None,
              verbose: bool = False) -> BenchmarkResult:
    """Run a paired sweep of independent datasets and trainings.

    Run i uses noise seed noise.seed + i and training seed train_seed + i;
    within a run every mode trains on the same measurement set. Runs are
    fanned out over worker processes (set processes=1 to stay serial).
    """
    payloads = []
    for i in range(n_runs):
        payloads.append({
            "index": i,
            "scenario": scenario.to_dict(),
            "domain": {"t_max": domain.t_max, "x_min": domain.x_min,
                       "x_max": domain.x_max, "n_cells": domain.n_cells,
                       "n_steps": domain.n_steps},
            "y0": [float(v) for v in np.asarray(y0)],
            "n_data": n_data, "n_f": n_f, "n_g": n_g,
            "noise": NoiseConfig(noise.sigma_rho, noise.mu_rho, noise.sigma_y,
                                 noise.seed + i).to_dict(),
            "colloc_seed": noise.seed + i,
            "train_seed": train_seed + i,
            "options": {"width": options.width, "depth": options.depth,
                        "viscosity_init": options.viscosity_init,
                        "iteration_scale": options.iteration_scale,
                        "coupled": options.coupled},
            "modes": list(modes),
        })
    if processes is not None and processes <= 1:
        results = [_benchmark_worker(p) for p in payloads]
    else:
        workers = processes or min(n_runs, os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_benchmark_worker, payloads))
    results.sort(key=lambda r: r["index"])
    if verbose:
        for r in results:
            if r["ok"]:
                bits = ", ".join(
                    f"{m}={r['results'][m]['generalization_error']:.4f}"
                    for m in modes)
                print(f"  run {r['index']}: {bits}")
            else:
                print(f"  run {r['index']}: FAILED ({r['message']})")
    return BenchmarkResult(results, list(modes))
