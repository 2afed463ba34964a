"""Lagrangian sensing: noisy probe measurements and collocation sampling.

Probes report density just ahead of them (possibly biased and noisy) and
their own GPS-like position corrupted by a Brownian walk. Collocation points
for the physics residual are rejection-sampled from the region between the
first and last *reported* trajectories, since the true paths are unknown to
the reconstructor.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .agents import AgentTrajectories
from .errors import ConfigError, DomainError, GeometryError
from .godunov import DensityField, Domain

_MS_SCHEMA = "probeflow.measurement-set/1"

# Minimum draws before the rejection-rate guard may trip.
_MIN_DRAWS = 2000
_MIN_ACCEPT_RATE = 0.01


@dataclass(frozen=True)
class NoiseConfig:
    """Measurement corruption parameters.

    sigma_rho / mu_rho: std and mean of the additive Gaussian density noise
    (density readings are NOT clamped afterwards). sigma_y: per-unit-time
    variance of the Brownian position walk, so an increment over dt has
    variance sigma_y * dt.
    """

    sigma_rho: float = 0.0
    mu_rho: float = 0.0
    sigma_y: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_rho < 0 or self.sigma_y < 0:
            raise ConfigError("noise scales must be non-negative")
        if not np.isfinite(self.mu_rho):
            raise ConfigError("mu_rho must be finite")

    def to_dict(self) -> dict:
        return {"sigma_rho": self.sigma_rho, "mu_rho": self.mu_rho,
                "sigma_y": self.sigma_y, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseConfig":
        try:
            return cls(float(d.get("sigma_rho", 0.0)), float(d.get("mu_rho", 0.0)),
                       float(d.get("sigma_y", 0.0)), int(d.get("seed", 0)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad noise config: {exc}") from exc


@dataclass(frozen=True)
class Standardizer:
    """Affine map of (t, x) onto [-1, 1]^2 plus the chain-rule factors."""

    t_max: float
    x_min: float
    x_max: float

    def __post_init__(self):
        if self.t_max <= 0 or self.x_max <= self.x_min:
            raise ConfigError("degenerate domain box for standardization")

    @property
    def t_scale(self) -> float:
        """d(mapped t) / dt."""
        return 2.0 / self.t_max

    @property
    def x_scale(self) -> float:
        """d(mapped x) / dx."""
        return 2.0 / (self.x_max - self.x_min)

    def map_t(self, t):
        return 2.0 * np.asarray(t, float) / self.t_max - 1.0

    def inv_t(self, s):
        return (np.asarray(s, float) + 1.0) * self.t_max / 2.0

    def map_x(self, x):
        return 2.0 * (np.asarray(x, float) - self.x_min) / (self.x_max - self.x_min) - 1.0

    def inv_x(self, s):
        return self.x_min + (np.asarray(s, float) + 1.0) * (self.x_max - self.x_min) / 2.0

    def to_dict(self) -> dict:
        return {"t_max": self.t_max, "x_min": self.x_min, "x_max": self.x_max}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(float(d["t_max"]), float(d["x_min"]), float(d["x_max"]))


@dataclass
class MeasurementSet:
    """Everything the reconstructor is given.

    Carries the domain box and free-flow speed (assumed known road/model
    facts), the noisy per-probe readings on the shared clock t_data, and,
    once sampled, the residual collocation sets.
    """

    t_data: np.ndarray        # (K,)
    w_noisy: np.ndarray       # (K, N) reported positions
    rho_noisy: np.ndarray     # (K, N) reported densities (unclamped)
    t_max: float
    x_min: float
    x_max: float
    v_f: float
    colloc_t: np.ndarray | None = None   # (N_F,)
    colloc_x: np.ndarray | None = None   # (N_F,)
    ode_t: np.ndarray | None = None      # (N_G,)
    colloc_acceptance: float | None = None
    noise: NoiseConfig | None = None

    def __post_init__(self):
        self.t_data = np.asarray(self.t_data, dtype=np.float64)
        self.w_noisy = np.asarray(self.w_noisy, dtype=np.float64)
        self.rho_noisy = np.asarray(self.rho_noisy, dtype=np.float64)
        k = self.t_data.size
        if self.t_data.ndim != 1 or k == 0:
            raise ConfigError("t_data must be a non-empty 1-D array")
        if self.w_noisy.shape != self.rho_noisy.shape or self.w_noisy.shape[0] != k:
            raise ConfigError("w_noisy and rho_noisy must be (len(t_data), N)")
        if np.any(np.diff(self.t_data) < 0):
            raise ConfigError("t_data must be ascending")
        if not (np.all(np.isfinite(self.t_data)) and np.all(np.isfinite(self.w_noisy))
                and np.all(np.isfinite(self.rho_noisy))):
            raise ConfigError("measurement arrays must be finite")
        if self.t_max <= 0 or self.x_max <= self.x_min:
            raise ConfigError("degenerate domain box on measurement set")

    @property
    def n_agents(self) -> int:
        return self.w_noisy.shape[1]

    @property
    def n_data(self) -> int:
        return self.t_data.size

    def standardizer(self) -> Standardizer:
        return Standardizer(self.t_max, self.x_min, self.x_max)

    def require_collocation(self) -> None:
        if self.colloc_t is None or self.ode_t is None:
            raise ConfigError("measurement set has no collocation sets; "
                              "run sample_collocation first")

    def to_dict(self) -> dict:
        d = {
            "schema": _MS_SCHEMA,
            "t_max": self.t_max, "x_min": self.x_min, "x_max": self.x_max,
            "v_f": self.v_f,
            "t_data": self.t_data.tolist(),
            "w_noisy": self.w_noisy.tolist(),
            "rho_noisy": self.rho_noisy.tolist(),
            "colloc_t": None if self.colloc_t is None else self.colloc_t.tolist(),
            "colloc_x": None if self.colloc_x is None else self.colloc_x.tolist(),
            "ode_t": None if self.ode_t is None else self.ode_t.tolist(),
            "colloc_acceptance": self.colloc_acceptance,
            "noise": None if self.noise is None else self.noise.to_dict(),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementSet":
        if d.get("schema") != _MS_SCHEMA:
            raise ConfigError(f"unknown measurement-set schema {d.get('schema')!r}")
        try:
            return cls(
                t_data=np.asarray(d["t_data"], float),
                w_noisy=np.asarray(d["w_noisy"], float),
                rho_noisy=np.asarray(d["rho_noisy"], float),
                t_max=float(d["t_max"]), x_min=float(d["x_min"]),
                x_max=float(d["x_max"]), v_f=float(d["v_f"]),
                colloc_t=None if d.get("colloc_t") is None else np.asarray(d["colloc_t"], float),
                colloc_x=None if d.get("colloc_x") is None else np.asarray(d["colloc_x"], float),
                ode_t=None if d.get("ode_t") is None else np.asarray(d["ode_t"], float),
                colloc_acceptance=d.get("colloc_acceptance"),
                noise=None if d.get("noise") is None else NoiseConfig.from_dict(d["noise"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad measurement set: {exc}") from exc

    def save(self, path: str) -> None:
        with open(path, "w", encoding="ascii") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str) -> "MeasurementSet":
        try:
            with open(path, "r", encoding="ascii") as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(d)


def measure(field: DensityField, traj: AgentTrajectories, n_data: int,
            noise: NoiseConfig) -> MeasurementSet:
    """Sample noisy probe readings at uniformly spaced instants.

    Density noise and the position walk come from independent seeded
    sub-streams, and both are drawn regardless of their scale so that
    changing one sigma never shifts the other stream's draws.

    Args:
        field: ground-truth density field.
        traj: probe trajectories on the solver grid.
        n_data: number of shared measurement instants over [0, t_max].
        noise: corruption parameters.

    Returns:
        MeasurementSet without collocation sets.
    """
    if n_data < 2:
        raise ConfigError(f"n_data must be >= 2, got {n_data}")
    dom = field.domain
    t_k = np.linspace(0.0, dom.t_max, n_data)
    y = traj.positions_at(t_k)                     # (K, N), true positions
    n = traj.n_agents

    rho_true = np.empty_like(y)
    for k, t in enumerate(t_k):
        rho_true[k] = field.sample_many(t, y[k])

    rho_stream, walk_stream = [np.random.default_rng(s)
                               for s in np.random.SeedSequence(noise.seed).spawn(2)]
    z_rho = rho_stream.standard_normal(y.shape)
    rho_noisy = rho_true + noise.mu_rho + noise.sigma_rho * z_rho

    z_walk = walk_stream.standard_normal(y.shape)
    steps = np.sqrt(noise.sigma_y * np.diff(t_k, prepend=0.0))[:, None] * z_walk
    w_noisy = y + np.cumsum(steps, axis=0)

    return MeasurementSet(
        t_data=t_k, w_noisy=w_noisy, rho_noisy=rho_noisy,
        t_max=dom.t_max, x_min=dom.x_min, x_max=dom.x_max,
        v_f=field.v_f, noise=noise,
    )


def sample_collocation(ms: MeasurementSet, n_f: int, n_g: int, seed: int) -> MeasurementSet:
    """Attach residual collocation sets to a measurement set.

    PDE points are uniform over the region between the linearly interpolated
    first and last reported trajectories; dynamics instants are uniform over
    [0, t_max].

    Args:
        ms: measurement set with reported trajectories.
        n_f: number of PDE residual points.
        n_g: number of dynamics residual instants.
        seed: RNG seed for this sampling pass.

    Returns:
        New MeasurementSet with colloc_t/colloc_x/ode_t filled.

    Raises:
        GeometryError: acceptance rate below 1% (degenerate band).
    """
    if n_f < 1 or n_g < 1:
        raise ConfigError("n_f and n_g must be >= 1")
    rng = np.random.default_rng(seed)
    t_k = ms.t_data
    lower_pts = ms.w_noisy[:, 0]
    upper_pts = ms.w_noisy[:, -1]
    x_lo, x_hi = float(np.min(lower_pts)), float(np.max(upper_pts))
    if x_hi <= x_lo:
        raise GeometryError("reported trajectory band has non-positive width")

    acc_t: list[np.ndarray] = []
    acc_x: list[np.ndarray] = []
    n_accepted = 0
    n_drawn = 0
    batch = max(4 * n_f, 1024)
    while n_accepted < n_f:
        ts = rng.uniform(0.0, ms.t_max, size=batch)
        xs = rng.uniform(x_lo, x_hi, size=batch)
        lo = np.interp(ts, t_k, lower_pts)
        hi = np.interp(ts, t_k, upper_pts)
        keep = (xs >= lo) & (xs <= hi)
        acc_t.append(ts[keep])
        acc_x.append(xs[keep])
        n_accepted += int(keep.sum())
        n_drawn += batch
        if n_drawn >= _MIN_DRAWS and n_accepted / n_drawn < _MIN_ACCEPT_RATE:
            raise GeometryError(
                f"collocation acceptance rate {n_accepted / n_drawn:.4f} below "
                f"{_MIN_ACCEPT_RATE}; reported trajectory band is degenerate")
    colloc_t = np.concatenate(acc_t)[:n_f]
    colloc_x = np.concatenate(acc_x)[:n_f]
    ode_t = rng.uniform(0.0, ms.t_max, size=n_g)

    out = dataclasses.replace(ms)
    out.colloc_t, out.colloc_x, out.ode_t = colloc_t, colloc_x, ode_t
    out.colloc_acceptance = n_accepted / n_drawn
    return out


def standardize(ms: MeasurementSet, domain: Domain | None = None
                ) -> tuple[MeasurementSet, Standardizer]:
    """Map all coordinates of a measurement set onto [-1, 1].

    Args:
        ms: measurement set in physical coordinates.
        domain: optional grid whose box overrides the one stored on ms.

    Returns:
        (mapped copy, Standardizer). The copy's coordinate arrays are in
        mapped units while its box fields keep describing the physical box
        (which the Standardizer also carries). Training code normally keeps
        the set in physical coordinates and lets the model map internally;
        this is for callers who want the mapped view itself.
    """
    std = Standardizer(domain.t_max, domain.x_min, domain.x_max) if domain is not None \
        else ms.standardizer()
    out = dataclasses.replace(ms)
    out.t_data = np.asarray(std.map_t(ms.t_data))
    out.w_noisy = np.asarray(std.map_x(ms.w_noisy))
    if ms.colloc_t is not None:
        out.colloc_t = np.asarray(std.map_t(ms.colloc_t))
        out.colloc_x = np.asarray(std.map_x(ms.colloc_x))
    if ms.ode_t is not None:
        out.ode_t = np.asarray(std.map_t(ms.ode_t))
    return out, std
