"""Godunov finite-volume solver for the scalar traffic conservation law.

Generates ground-truth density fields on a uniform grid with piecewise
constant initial data and time-switched ghost-cell boundary densities. The
numerical flux is the demand/supply form, exact for concave fundamental
diagrams; a per-step boundary-flux ledger makes mass balance checkable to
round-off.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .flux import Greenshields

# CFL safety factor: dt <= CFL_SAFETY * dx / v_f.
CFL_SAFETY = 0.9

# Slack when snapping continuous (t, x) queries onto the grid index lattice.
_GRID_EPS = 1e-9

_FIELD_SCHEMA = "probeflow.density-field/1"


@dataclass(frozen=True)
class Domain:
    """Uniform space-time grid over [0, t_max] x [x_min, x_max]."""

    t_max: float
    x_min: float
    x_max: float
    n_cells: int
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t_max) and self.t_max > 0):
            raise ConfigError(f"t_max must be positive, got {self.t_max}")
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max) and self.x_max > self.x_min):
            raise ConfigError("need x_max > x_min")
        if self.n_cells < 2:
            raise ConfigError(f"n_cells must be >= 2, got {self.n_cells}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")

    @classmethod
    def from_cfl(cls, t_max: float, x_min: float, x_max: float, n_cells: int,
                 v_max: float, safety: float = CFL_SAFETY) -> "Domain":
        """Build a domain whose time step satisfies dt <= safety * dx / v_max.

        n_steps is the smallest integer count meeting the bound, so dt divides
        t_max exactly.
        """
        if n_cells < 2:
            raise ConfigError(f"n_cells must be >= 2, got {n_cells}")
        if not (np.isfinite(v_max) and v_max > 0):
            raise ConfigError("v_max must be positive")
        dx = (x_max - x_min) / n_cells
        dt_cap = safety * dx / v_max
        n_steps = max(1, math.ceil(t_max / dt_cap - 1e-12))
        return cls(t_max, x_min, x_max, n_cells, n_steps)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_steps + 1)

    def cell_centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def interfaces(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx

    def cell_index(self, x: float) -> int:
        """Cell owning position x under the right-limit convention.

        A query exactly on an interior interface belongs to the cell on its
        right; x == x_max maps to the last cell.
        """
        if not (self.x_min - _GRID_EPS <= x <= self.x_max + _GRID_EPS):
            raise DomainError(f"x={x} outside [{self.x_min}, {self.x_max}]")
        u = (x - self.x_min) / self.dx
        return min(max(int(math.floor(u + _GRID_EPS)), 0), self.n_cells - 1)

    def time_index(self, t: float) -> int:
        """Stored row at or immediately below time t."""
        if not (-_GRID_EPS <= t <= self.t_max * (1.0 + _GRID_EPS) + _GRID_EPS):
            raise DomainError(f"t={t} outside [0, {self.t_max}]")
        k = int(math.floor(t / self.dt + _GRID_EPS))
        return min(max(k, 0), self.n_steps)


@dataclass(frozen=True)
class ScenarioSpec:
    """Seeded recipe for a ground-truth scenario.

    Initial data is piecewise constant over ``ic_segments`` equal pieces with
    levels drawn uniformly from [level_low, level_high]; ghost-cell boundary
    densities switch every t_max / boundary_switches. Explicit level tuples
    override the random draws (used for Riemann and constant fixtures).
    """

    seed: int
    v_f: float = 1.0
    ic_segments: int = 6
    level_low: float = 0.1
    level_high: float = 0.9
    boundary_switches: int = 4
    ic_levels: tuple[float, ...] | None = None
    inflow_levels: tuple[float, ...] | None = None
    outflow_levels: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.ic_segments < 1 or self.boundary_switches < 1:
            raise ConfigError("ic_segments and boundary_switches must be >= 1")
        if not (0.0 <= self.level_low <= self.level_high <= 1.0):
            raise ConfigError("need 0 <= level_low <= level_high <= 1")
        for name in ("ic_levels", "inflow_levels", "outflow_levels"):
            levels = getattr(self, name)
            if levels is not None:
                arr = np.asarray(levels, dtype=float)
                if arr.size == 0 or np.any(arr < 0.0) or np.any(arr > 1.0):
                    raise ConfigError(f"{name} must be non-empty with values in [0, 1]")
                object.__setattr__(self, name, tuple(float(v) for v in arr))

    def resolve_levels(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Draw (or pass through) IC, inflow, and outflow level arrays.

        Draw order is fixed (IC, inflow, outflow) so results are reproducible
        per seed.
        """
        rng = np.random.default_rng(self.seed)

        def draw(n):
            return rng.uniform(self.level_low, self.level_high, size=n)

        ic = np.asarray(self.ic_levels, float) if self.ic_levels is not None \
            else draw(self.ic_segments)
        inflow = np.asarray(self.inflow_levels, float) if self.inflow_levels is not None \
            else draw(self.boundary_switches)
        outflow = np.asarray(self.outflow_levels, float) if self.outflow_levels is not None \
            else draw(self.boundary_switches)
        return ic, inflow, outflow

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "v_f": self.v_f, "ic_segments": self.ic_segments,
            "level_low": self.level_low, "level_high": self.level_high,
            "boundary_switches": self.boundary_switches,
            "ic_levels": list(self.ic_levels) if self.ic_levels else None,
            "inflow_levels": list(self.inflow_levels) if self.inflow_levels else None,
            "outflow_levels": list(self.outflow_levels) if self.outflow_levels else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        try:
            return cls(
                seed=int(d["seed"]), v_f=float(d.get("v_f", 1.0)),
                ic_segments=int(d.get("ic_segments", 6)),
                level_low=float(d.get("level_low", 0.1)),
                level_high=float(d.get("level_high", 0.9)),
                boundary_switches=int(d.get("boundary_switches", 4)),
                ic_levels=tuple(d["ic_levels"]) if d.get("ic_levels") else None,
                inflow_levels=tuple(d["inflow_levels"]) if d.get("inflow_levels") else None,
                outflow_levels=tuple(d["outflow_levels"]) if d.get("outflow_levels") else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario spec: {exc}") from exc


@dataclass
class DensityField:
    """Solved density grid plus the boundary-flux ledger.

    values[m, i] is the cell average in cell i at time m * dt. inflow_flux[m]
    and outflow_flux[m] are the boundary fluxes used by step m -> m + 1, so
    mass balance closes per step.
    """

    domain: Domain
    values: np.ndarray          # (n_steps + 1, n_cells)
    inflow_flux: np.ndarray     # (n_steps,)
    outflow_flux: np.ndarray    # (n_steps,)
    v_f: float = 1.0

    def __post_init__(self):
        want = (self.domain.n_steps + 1, self.domain.n_cells)
        if self.values.shape != want:
            raise ConfigError(f"values shape {self.values.shape} != {want}")
        if self.inflow_flux.shape != (self.domain.n_steps,) or \
                self.outflow_flux.shape != (self.domain.n_steps,):
            raise ConfigError("boundary ledger length must equal n_steps")

    def sample(self, t: float, x: float) -> float:
        """Density at (t, x): right limit in x, stored row nearest below in t."""
        m = self.domain.time_index(t)
        i = self.domain.cell_index(x)
        return float(self.values[m, i])

    def sample_many(self, t: float, xs: np.ndarray) -> np.ndarray:
        m = self.domain.time_index(t)
        row = self.values[m]
        u = (np.asarray(xs, float) - self.domain.x_min) / self.domain.dx
        if np.any(u < -_GRID_EPS) or np.any(u > self.domain.n_cells + _GRID_EPS):
            raise DomainError("position outside spatial domain")
        idx = np.clip(np.floor(u + _GRID_EPS).astype(int), 0, self.domain.n_cells - 1)
        return row[idx]

    def mass(self, m: int) -> float:
        """Total mass (integral of density) of stored row m."""
        return float(np.sum(self.values[m]) * self.domain.dx)

    def mass_balance_defects(self) -> np.ndarray:
        """Per-step |d(mass) - dt * (F_in - F_out)|, normalized by domain mass scale."""
        dx, dt = self.domain.dx, self.domain.dt
        masses = self.values.sum(axis=1) * dx
        flux_net = dt * (self.inflow_flux - self.outflow_flux)
        scale = max(np.max(np.abs(masses)), dt * self.v_f, 1e-300)
        return np.abs(np.diff(masses) - flux_net) / scale

    # Serialization: one JSON header line, then little-endian float64 blobs.
    def save(self, path: str) -> None:
        header = {
            "schema": _FIELD_SCHEMA, "t_max": self.domain.t_max,
            "x_min": self.domain.x_min, "x_max": self.domain.x_max,
            "n_cells": self.domain.n_cells, "n_steps": self.domain.n_steps,
            "v_f": self.v_f,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header).encode("ascii") + b"\n")
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.inflow_flux, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.outflow_flux, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str) -> "DensityField":
        with open(path, "rb") as fh:
            raw = fh.read()
        nl = raw.find(b"\n")
        if nl < 0:
            raise ConfigError(f"{path}: missing header line")
        try:
            header = json.loads(raw[:nl].decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: bad header: {exc}") from exc
        if header.get("schema") != _FIELD_SCHEMA:
            raise ConfigError(f"{path}: unknown schema {header.get('schema')!r}")
        dom = Domain(header["t_max"], header["x_min"], header["x_max"],
                     int(header["n_cells"]), int(header["n_steps"]))
        blob = np.frombuffer(raw[nl + 1:], dtype="<f8")
        n_grid = (dom.n_steps + 1) * dom.n_cells
        want = n_grid + 2 * dom.n_steps
        if blob.size != want:
            raise ConfigError(f"{path}: expected {want} floats, found {blob.size}")
        values = blob[:n_grid].reshape(dom.n_steps + 1, dom.n_cells).copy()
        inflow = blob[n_grid:n_grid + dom.n_steps].copy()
        outflow = blob[n_grid + dom.n_steps:].copy()
        return cls(dom, values, inflow, outflow, v_f=float(header.get("v_f", 1.0)))

    def to_csv(self, path: str) -> None:
        """Grid as CSV: header row of times, first column of cell centers."""
        times = self.domain.times()
        centers = self.domain.cell_centers()
        with open(path, "w", encoding="ascii") as fh:
            fh.write("x," + ",".join(repr(float(t)) for t in times) + "\n")
            for i, xc in enumerate(centers):
                fh.write(repr(float(xc)) + "," +
                         ",".join(repr(float(v)) for v in self.values[:, i]) + "\n")


def demand(model: Greenshields, rho):
    """Sending capacity of the upstream cell."""
    return model.flux(np.minimum(rho, model.critical_density))


def supply(model: Greenshields, rho):
    """Receiving capacity of the downstream cell."""
    return model.flux(np.maximum(rho, model.critical_density))


def godunov_numerical_flux(model: Greenshields, rho_left, rho_right):
    """Interface flux min(demand(left), supply(right)).

    Exact Godunov flux for concave fundamental diagrams, including the
    transonic case where the critical flux is emitted.
    """
    return np.minimum(demand(model, rho_left), supply(model, rho_right))


def check_cfl(dt: float, dx: float, v_max: float, safety: float = CFL_SAFETY) -> None:
    if dt > safety * dx / v_max * (1.0 + 1e-12):
        raise ConfigError(
            f"CFL violated: dt={dt} > {safety} * dx/v = {safety * dx / v_max}")


def step(model: Greenshields, row: np.ndarray, dt: float, dx: float,
         boundary_in: float, boundary_out: float) -> tuple[np.ndarray, float, float]:
    """One conservative update of a density row.

    Args:
        model: flux model supplying demand/supply.
        row: cell averages, shape (n_cells,).
        dt, dx: step sizes; dt must satisfy the CFL bound for model.v_f.
        boundary_in: ghost density left of the first cell.
        boundary_out: ghost density right of the last cell.

    Returns:
        (new_row, inflow_flux, outflow_flux) where the fluxes are the values
        that entered the mass ledger for this step.
    """
    check_cfl(dt, dx, model.v_f)
    ext = np.empty(row.size + 2)
    ext[0] = boundary_in
    ext[1:-1] = row
    ext[-1] = boundary_out
    f = godunov_numerical_flux(model, ext[:-1], ext[1:])
    new_row = row - (dt / dx) * (f[1:] - f[:-1])
    return new_row, float(f[0]), float(f[-1])


def initial_condition(spec: ScenarioSpec, domain: Domain, ic_levels: np.ndarray) -> np.ndarray:
    """Piecewise-constant initial row from segment levels (equal cell counts)."""
    seg = (np.arange(domain.n_cells) * len(ic_levels)) // domain.n_cells
    return ic_levels[seg].astype(np.float64)


def _schedule_value(levels: np.ndarray, t: float, t_max: float) -> float:
    idx = min(int(t / (t_max / len(levels))), len(levels) - 1)
    return float(levels[idx])


def simulate(spec: ScenarioSpec, domain: Domain) -> DensityField:
    """Run the scheme over the full horizon.

    Args:
        spec: scenario recipe (seed, flux speed, level schedules).
        domain: grid; its dt must satisfy the CFL bound for spec.v_f.

    Returns:
        DensityField with all stored rows and the boundary-flux ledger.
    """
    model = Greenshields(spec.v_f)
    check_cfl(domain.dt, domain.dx, spec.v_f)
    ic_levels, in_levels, out_levels = spec.resolve_levels()

    values = np.empty((domain.n_steps + 1, domain.n_cells))
    inflow = np.empty(domain.n_steps)
    outflow = np.empty(domain.n_steps)
    values[0] = initial_condition(spec, domain, ic_levels)
    for m in range(domain.n_steps):
        t_m = m * domain.dt
        b_in = _schedule_value(in_levels, t_m, domain.t_max)
        b_out = _schedule_value(out_levels, t_m, domain.t_max)
        values[m + 1], inflow[m], outflow[m] = step(
            model, values[m], domain.dt, domain.dx, b_in, b_out)
    return DensityField(domain, values, inflow, outflow, v_f=spec.v_f)
