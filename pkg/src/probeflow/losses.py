"""Physics-informed loss terms coupling the two networks.

Terms (weights in parentheses):
    data        (data):        probe density readings vs the density net,
                               evaluated along reported or reconstructed
                               trajectories; mean over instants only.
    residual    (residual):    relaxed conservation-law defect
                               u_t + c(u) u_x - visc^2 u_xx at collocation
                               points; mean over points.
    viscosity   (viscosity):   penalty visc^2 pulling the relaxation back
                               toward the hyperbolic limit.
    trajectory  (trajectory):  reconstructed vs reported positions; mean over
                               instants and probes.
    dynamics    (dynamics):    probe speed law defect
                               d(position)/dt - V(clamped density); mean over
                               instants and probes.
    bias_l2     (bias_l2):     optional ridge on the bias estimate.

The data term is averaged over instants but summed over probes, while the
trajectory/dynamics terms are averaged over both; this asymmetry is part of
the loss definition and tests pin it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var, value_and_grad
from .errors import ConfigError, NumericsError
from .model import BLOCKS, ReconstructionModel
from .networks import (density_derivs, density_values, tape_dense_derivs,
                       tape_dense_value, tape_layers, trajectory_state)
from .sensing import MeasurementSet


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights of the loss terms (defaults: final polish stage)."""

    data: float = 1.0
    residual: float = 1.0
    viscosity: float = 0.1
    trajectory: float = 1.0
    dynamics: float = 0.5
    bias_l2: float = 0.0

    def __post_init__(self):
        for name in ("data", "residual", "viscosity", "trajectory", "dynamics", "bias_l2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ConfigError(f"weight {name} must be finite and >= 0, got {v}")


def assemble_pde_defect(flux, visc_sq, value, ddt, ddx, ddxx):
    """Relaxed conservation-law defect from raw derivative channels.

    Works on floats, arrays, and tape nodes alike; the characteristic speed
    takes the raw surrogate value with no domain check.
    """
    return ddt + flux.char_speed_raw(value) * ddx - visc_sq * ddxx


def pde_residual(model: ReconstructionModel, t, x):
    """Defect of the density surrogate at physical points (numpy probe path)."""
    v, ddt, ddx, ddxx = density_derivs(model.density_net, model.std, t, x)
    return assemble_pde_defect(model.flux, model.viscosity_sq, v, ddt, ddx, ddxx)


def ode_residual(model: ReconstructionModel, t: float) -> np.ndarray:
    """Speed-law defect of every probe at time t (numpy probe path)."""
    pos, vel = trajectory_state(model.trajectory_net, model.std, float(t))
    theta = density_values(model.density_net, model.std,
                           np.full(pos.shape, float(t)), pos)
    speed = model.flux.agent_speed_raw(np.clip(theta, 0.0, 1.0))
    return vel - speed


class _TapeModel:
    """Tape view of all model parameters sliced out of one flat leaf."""

    def __init__(self, root: Var, model: ReconstructionModel):
        layout = model.layout()
        d = layout.block("density")
        t = layout.block("trajectory")
        self.density_layers, _ = tape_layers(root, model.density_net.net, d.start)
        self.tanh_layers, k = tape_layers(root, model.trajectory_net.tanh_net, t.start)
        self.relu_layers, k = tape_layers(root, model.trajectory_net.relu_net, k)
        self.mix0 = ad.take(root, k, k + 1)
        self.mix1 = ad.take(root, k + 1, k + 2)
        v = layout.block("viscosity")
        self.visc = ad.take(root, v.start, v.stop)          # (1,)
        m = layout.block("meas_bias")
        self.bias = ad.take(root, m.start, m.stop)          # (N,)
        self.std = model.std
        self.flux = model.flux

    def _mapped_x(self, x):
        """Standardize a position column; x may be a Var or a plain array."""
        xs = self.std.x_scale
        shift = -self.std.x_min * xs - 1.0
        if isinstance(x, Var):
            return ad.add(ad.mul(x, xs), shift)
        return ad.const(np.asarray(x) * xs + shift)

    def density_value(self, t_phys: np.ndarray, x) -> Var:
        """Density surrogate values at (t, x); x may carry gradients."""
        t_std = ad.const(self.std.map_t(t_phys).reshape(-1, 1))
        x_std = self._mapped_x(x)
        a0 = ad.concat_cols(t_std, x_std)
        return tape_dense_value(self.density_layers, a0)

    def density_derivs(self, t_phys: np.ndarray, x_phys: np.ndarray):
        n = t_phys.size
        a0 = ad.const(np.column_stack([self.std.map_t(t_phys), self.std.map_x(x_phys)]))
        seed_t = ad.const(np.tile([self.std.t_scale, 0.0], (n, 1)))
        seed_x = ad.const(np.tile([0.0, self.std.x_scale], (n, 1)))
        val, (ddt, ddx), ddxx = tape_dense_derivs(
            self.density_layers, a0, [seed_t, seed_x], 1)
        return val, ddt, ddx, ddxx

    def trajectory(self, t_phys: np.ndarray) -> tuple[Var, Var]:
        """Positions and velocities (physical units) at the given instants."""
        n = t_phys.size
        xin = ad.const(self.std.map_t(t_phys).reshape(-1, 1))
        seed = ad.const(np.full((n, 1), self.std.t_scale))
        out_t, (dout_t,), _ = tape_dense_derivs(self.tanh_layers, xin, [seed], None)
        out_r, (dout_r,), _ = tape_dense_derivs(self.relu_layers, xin, [seed], None)
        raw = ad.add(ad.mul(self.mix0, out_t), ad.mul(self.mix1, out_r))
        draw = ad.add(ad.mul(self.mix0, dout_t), ad.mul(self.mix1, dout_r))
        half_len = (self.std.x_max - self.std.x_min) / 2.0
        positions = ad.add(ad.mul(raw, half_len), self.std.x_min + half_len)
        velocities = ad.mul(draw, half_len)
        return positions, velocities


def _check_term(name: str, term: Var) -> Var:
    if not np.isfinite(float(term.value)):
        raise NumericsError("loss term is not finite", tag=name)
    return term


def build_loss(root: Var, model: ReconstructionModel, ms: MeasurementSet,
               w: LossWeights, coupled: bool) -> tuple[Var, dict[str, float]]:
    """Assemble the weighted loss graph; returns (total, per-term values).

    Terms with zero weight are skipped entirely, so zeroing a weight removes
    exactly that term from both value and gradient.
    """
    tm = _TapeModel(root, model)
    k, n = ms.n_data, ms.n_agents
    terms: dict[str, Var] = {}

    pos_k = None
    if coupled and (w.data > 0 or w.trajectory > 0):
        pos_k, _ = tm.trajectory(ms.t_data)

    if w.data > 0:
        readings = ad.const(ms.rho_noisy)
        if coupled:
            target = ad.sub(readings, tm.bias)
            t_rep = np.repeat(ms.t_data, n)
            theta = tm.density_value(t_rep, ad.reshape(pos_k, (k * n, 1)))
        else:
            target = readings
            t_rep = np.repeat(ms.t_data, n)
            theta = tm.density_value(t_rep, ms.w_noisy.reshape(k * n, 1))
        diff = ad.sub(target, ad.reshape(theta, (k, n)))
        terms["data"] = _check_term("data", ad.mul(w.data / k, ad.vsum(ad.square(diff))))

    if w.residual > 0:
        if ms.colloc_t is None:
            raise ConfigError("residual weight > 0 needs collocation points")
        n_f = ms.colloc_t.size
        val, ddt, ddx, ddxx = tm.density_derivs(ms.colloc_t, ms.colloc_x)
        visc_sq = ad.mul(tm.visc, tm.visc)
        defect = assemble_pde_defect(tm.flux, visc_sq, val, ddt, ddx, ddxx)
        terms["residual"] = _check_term(
            "residual", ad.mul(w.residual / n_f, ad.vsum(ad.square(defect))))

    if w.viscosity > 0:
        terms["viscosity"] = _check_term(
            "viscosity", ad.mul(w.viscosity, ad.vsum(ad.square(tm.visc))))

    if coupled and w.trajectory > 0:
        diff = ad.sub(pos_k, ad.const(ms.w_noisy))
        terms["trajectory"] = _check_term(
            "trajectory", ad.mul(w.trajectory / (k * n), ad.vsum(ad.square(diff))))

    if coupled and w.dynamics > 0:
        if ms.ode_t is None:
            raise ConfigError("dynamics weight > 0 needs dynamics instants")
        n_g = ms.ode_t.size
        pos_g, vel_g = tm.trajectory(ms.ode_t)
        t_rep = np.repeat(ms.ode_t, n)
        theta_g = tm.density_value(t_rep, ad.reshape(pos_g, (n_g * n, 1)))
        speed = tm.flux.agent_speed_raw(ad.clamp01(ad.reshape(theta_g, (n_g, n))))
        defect = ad.sub(vel_g, speed)
        terms["dynamics"] = _check_term(
            "dynamics", ad.mul(w.dynamics / (n_g * n), ad.vsum(ad.square(defect))))

    if coupled and w.bias_l2 > 0:
        terms["bias_l2"] = _check_term(
            "bias_l2", ad.mul(w.bias_l2, ad.vsum(ad.square(tm.bias))))

    if not terms:
        raise ConfigError("all loss weights are zero")
    total = None
    for term in terms.values():
        total = term if total is None else ad.add(total, term)
    values = {name: float(t.value) for name, t in terms.items()}
    values["total"] = float(total.value)
    return total, values


def loss_coupled(model: ReconstructionModel, ms: MeasurementSet,
                 w: LossWeights) -> float:
    """Full coupled loss value at the model's current parameters."""
    total, _ = build_loss(ad.leaf(model.pack()), model, ms, w, coupled=True)
    return float(total.value)


def loss_noiseless(model: ReconstructionModel, ms: MeasurementSet,
                   w: LossWeights) -> float:
    """Data + residual + viscosity loss with trajectories taken as reported."""
    total, _ = build_loss(ad.leaf(model.pack()), model, ms, w, coupled=False)
    return float(total.value)


def loss_term_values(model: ReconstructionModel, ms: MeasurementSet,
                     w: LossWeights, coupled: bool = True) -> dict[str, float]:
    """Per-term diagnostic values at the current parameters."""
    _, terms = build_loss(ad.leaf(model.pack()), model, ms, w, coupled=coupled)
    return terms


class Objective:
    """Flat-vector objective over a chosen subset of parameter blocks.

    Calling it with the trainable sub-vector returns (loss, gradient of the
    sub-vector); frozen blocks keep the values the model was built with.
    """

    def __init__(self, model: ReconstructionModel, ms: MeasurementSet,
                 weights: LossWeights, coupled: bool = True,
                 trainable=None):
        self.model = model
        self.ms = ms
        self.weights = weights
        self.coupled = coupled
        self._base = model.pack()
        blocks = BLOCKS if trainable is None else tuple(trainable)
        self._idx = model.layout().indices(blocks)
        if self._idx.size == 0:
            raise ConfigError("objective has no trainable parameters")
        if weights.residual > 0:
            ms.require_collocation()

    @property
    def x0(self) -> np.ndarray:
        return self._base[self._idx].copy()

    def full_vector(self, sub: np.ndarray) -> np.ndarray:
        full = self._base.copy()
        full[self._idx] = sub
        return full

    def rebuild_model(self, sub: np.ndarray) -> ReconstructionModel:
        return self.model.with_params(self.full_vector(sub))

    def __call__(self, sub: np.ndarray) -> tuple[float, np.ndarray]:
        full = self.full_vector(sub)

        def build(root):
            total, _ = build_loss(root, self.model, self.ms, self.weights, self.coupled)
            return total

        f, g = value_and_grad(build, full)
        return f, g[self._idx]
