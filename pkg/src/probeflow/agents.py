"""Probe vehicles advected through a solved density field.

Each probe moves at the local traffic speed sampled just ahead of it (right
limit in space), integrated with explicit Euler on the solver time grid.
Ordering is preserved by construction for concave fluxes; exact ties are
broken by nudging the trailing probe back a hair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .flux import Greenshields
from .godunov import DensityField

# Tie-break offset, in units of dx.
_TIE_NUDGE = 1e-9


@dataclass
class AgentTrajectories:
    """Probe paths on the solver time grid.

    positions[m, i] is probe i at times[m]; speeds[m, i] the Euler speed used
    leaving that node (last row repeats the final sampled speed). truncated[i]
    marks probes that hit the right domain edge and were frozen there.
    """

    times: np.ndarray       # (M,)
    positions: np.ndarray   # (M, N)
    speeds: np.ndarray      # (M, N)
    truncated: np.ndarray   # (N,) bool

    @property
    def n_agents(self) -> int:
        return self.positions.shape[1]

    def positions_at(self, t) -> np.ndarray:
        """Linear interpolation of every probe path at times t (scalar or array)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise DomainError("query time outside trajectory support")
        out = np.empty(t.shape + (self.n_agents,))
        for i in range(self.n_agents):
            out[..., i] = np.interp(t, self.times, self.positions[:, i])
        return out

    def to_csv(self, path: str) -> None:
        n = self.n_agents
        with open(path, "w", encoding="ascii") as fh:
            fh.write("t," + ",".join(f"y{i + 1}" for i in range(n)) + "\n")
            for m, t in enumerate(self.times):
                fh.write(repr(float(t)) + "," +
                         ",".join(repr(float(v)) for v in self.positions[m]) + "\n")


def advance_agents(model: Greenshields, field: DensityField, positions: np.ndarray,
                   t: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One Euler step for all probes.

    Args:
        model: flux model supplying the probe speed law.
        field: solved density field (sampled with the right-limit convention).
        positions: strictly increasing probe positions at time t.
        t: current time.
        dt: step size.

    Returns:
        (new_positions, speeds_used). Probes about to leave the right edge are
        clamped at x_max; ordering is enforced strictly.
    """
    rho = field.sample_many(t, positions)
    speeds = np.asarray(model.agent_speed(rho), dtype=float)
    new_pos = positions + dt * speeds
    x_max = field.domain.x_max
    np.minimum(new_pos, x_max, out=new_pos)
    # Restore strict ordering back-to-front: the trailing probe gives way.
    nudge = _TIE_NUDGE * field.domain.dx
    for i in range(new_pos.size - 2, -1, -1):
        if new_pos[i] >= new_pos[i + 1]:
            new_pos[i] = new_pos[i + 1] - nudge
    return new_pos, speeds


def integrate_trajectories(model: Greenshields, field: DensityField,
                           y0: np.ndarray) -> AgentTrajectories:
    """Integrate probe paths over the whole stored horizon.

    Args:
        model: flux model (its v_f should match the field's).
        field: solved density field.
        y0: initial positions, strictly increasing, inside (x_min, x_max).

    Returns:
        AgentTrajectories on the field's time grid.

    Raises:
        ConfigError: unordered or out-of-domain initial positions.
    """
    y0 = np.asarray(y0, dtype=np.float64)
    if y0.ndim != 1 or y0.size < 1:
        raise ConfigError("y0 must be a non-empty 1-D array")
    if np.any(np.diff(y0) <= 0):
        raise ConfigError("initial positions must be strictly increasing")
    dom = field.domain
    if np.any(y0 <= dom.x_min) or np.any(y0 >= dom.x_max):
        raise ConfigError("initial positions must lie strictly inside the domain")

    times = dom.times()
    n, m_steps = y0.size, dom.n_steps
    positions = np.empty((m_steps + 1, n))
    speeds = np.empty((m_steps + 1, n))
    truncated = np.zeros(n, dtype=bool)
    positions[0] = y0
    for m in range(m_steps):
        positions[m + 1], speeds[m] = advance_agents(
            model, field, positions[m], times[m], dom.dt)
        truncated |= positions[m + 1] >= dom.x_max - 1e-12
    rho_last = field.sample_many(times[-1], positions[-1])
    speeds[-1] = model.agent_speed(rho_last)
    return AgentTrajectories(times, positions, speeds, truncated)


def vehicle_count(field: DensityField, t: float, a: float, b: float) -> float:
    """Integral of density over [a, b] at time t (piecewise-constant exact).

    Args:
        field: density field.
        t: query time.
        a, b: spatial bounds with a <= b, inside the domain.

    Returns:
        Vehicle count between a and b.
    """
    if b < a:
        raise DomainError(f"need a <= b, got a={a}, b={b}")
    dom = field.domain
    row = field.values[dom.time_index(t)]
    dx = dom.dx
    cum = np.concatenate([[0.0], np.cumsum(row) * dx])

    def antideriv(x: float) -> float:
        if not (dom.x_min - 1e-12 <= x <= dom.x_max + 1e-12):
            raise DomainError(f"x={x} outside [{dom.x_min}, {dom.x_max}]")
        u = (x - dom.x_min) / dx
        i = min(max(int(np.floor(u)), 0), dom.n_cells - 1)
        frac = min(max(u - i, 0.0), 1.0)
        return float(cum[i] + row[i] * frac * dx)

    return antideriv(b) - antideriv(a)
