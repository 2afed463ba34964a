"""Greenshields flux law for scalar traffic flow.

This module contains:
    - Greenshields: the concrete concave flux model (flux, characteristic
      speed, probe speed, critical density).
    - FluxTriple: a pluggable bundle for swapping in another concave flux.

Density is normalized to [0, 1]. Checked entry points reject values outside
[-DOMAIN_TOL, 1 + DOMAIN_TOL] and clamp the rest; the ``*_raw`` variants skip
the check and accept anything supporting +, -, * (floats, arrays, tape nodes)
so physics residuals can run through the autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError

# Tolerance for accepting slightly out-of-range densities before clamping.
DOMAIN_TOL = 1e-9


def _checked(rho, tol: float = DOMAIN_TOL):
    """Validate density values and clamp them into [0, 1].

    Args:
        rho: scalar or array of densities.
        tol: acceptance slack outside [0, 1].

    Returns:
        Clamped float or float64 array, scalar in -> scalar out.

    Raises:
        DomainError: if any value lies outside [-tol, 1 + tol].
    """
    arr = np.asarray(rho, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("density contains non-finite values")
    if np.any(arr < -tol) or np.any(arr > 1.0 + tol):
        bad = arr[(arr < -tol) | (arr > 1.0 + tol)].flat[0]
        raise DomainError(f"density {float(bad)} outside [0, 1] (tol {tol})")
    out = np.clip(arr, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Greenshields:
    """Greenshields fundamental diagram with free-flow speed ``v_f``.

    flux(rho)   = v_f * rho * (1 - rho)
    char. speed = v_f * (1 - 2 rho)      (derivative of the flux)
    probe speed = v_f * (1 - rho)        (flux / density, limit v_f at 0)
    """

    v_f: float

    def __post_init__(self):
        if not (np.isfinite(self.v_f) and self.v_f > 0):
            raise ConfigError(f"v_f must be positive and finite, got {self.v_f}")

    @property
    def critical_density(self) -> float:
        return 0.5

    @property
    def max_flux(self) -> float:
        return self.v_f * 0.25

    def flux(self, rho):
        """Flow rate at density rho, domain-checked.

        Written as (v_f * (1 - rho)) * rho so that the identity
        flux(rho) == agent_speed(rho) * rho holds bit-exactly.
        """
        r = _checked(rho)
        return self.v_f * (1.0 - r) * r

    def characteristic_speed(self, rho):
        """Wave (kinematic) speed f'(rho), domain-checked."""
        r = _checked(rho)
        return self.v_f * (1.0 - 2.0 * r)

    def agent_speed(self, rho):
        """Speed of a probe vehicle riding the flow, domain-checked.

        flux/density for rho > 0; continuously extended to v_f at rho = 0.
        """
        r = _checked(rho)
        return self.v_f * (1.0 - r)

    # Unchecked duck-typed forms: usable on autodiff nodes inside residuals.
    def flux_raw(self, rho):
        return self.v_f * (1.0 - rho) * rho

    def char_speed_raw(self, rho):
        return self.v_f * (1.0 - 2.0 * rho)

    def agent_speed_raw(self, rho):
        return self.v_f * (1.0 - rho)


@dataclass(frozen=True)
class FluxTriple:
    """Pluggable concave flux: (flux, its derivative, probe speed).

    All three callables must be vectorized over numpy arrays and defined on
    [0, 1]. ``critical_density`` is the argmax of the flux, used by the
    demand/supply splitting of the finite-volume scheme.
    """

    flux: Callable
    flux_derivative: Callable
    speed: Callable
    critical_density: float
    v_max: float  # bound on |flux_derivative| over [0, 1], used by CFL

    def __post_init__(self):
        if not 0.0 < self.critical_density < 1.0:
            raise ConfigError("critical_density must lie in (0, 1)")
        if not (np.isfinite(self.v_max) and self.v_max > 0):
            raise ConfigError("v_max must be positive and finite")


def greenshields_triple(v_f: float) -> FluxTriple:
    """FluxTriple view of the Greenshields model (mostly for tests/extensions)."""
    g = Greenshields(v_f)
    return FluxTriple(
        flux=g.flux_raw,
        flux_derivative=g.char_speed_raw,
        speed=g.agent_speed_raw,
        critical_density=g.critical_density,
        v_max=v_f,
    )
