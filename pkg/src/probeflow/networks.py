"""Dense networks with analytic propagation of input derivatives.

Two network roles:
    - DensityNet: (t, x) -> density surrogate, all-tanh hidden layers. Value
      and the physical first/second input derivatives needed by the PDE
      residual are propagated layer by layer, exactly.
    - TrajectoryNet: t -> all probe positions. Two parallel branches (tanh
      and relu) summed with two trainable mixing weights; value and time
      derivative propagate analytically.

Both consume standardized inputs in [-1, 1]; the chain-rule factors of the
affine map are folded into the derivative seeds, so every derivative
returned here is with respect to physical coordinates.

Each forward exists twice with identical arithmetic: on autodiff Vars (for
training gradients) and on plain arrays (for fast evaluation/export). A
consistency test pins the two together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var, value_and_grad
from .errors import ConfigError
from .sensing import Standardizer

# Spec'd default-size clamps for the density network.
_DEPTH_RANGE = (4, 12)
_WIDTH_RANGE = (20, 64)

# param_gradient(build, params) -> (loss, grad): generic reverse-mode entry.
param_gradient = value_and_grad

_ACTS = ("tanh", "relu", "linear")


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def he_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class DenseNetwork:
    """Plain fully-connected stack; activations[i] follows affine layer i."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ConfigError("layer lists must have equal length")
        for act in self.activations:
            if act not in _ACTS:
                raise ConfigError(f"unknown activation {act!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ConfigError(f"layer {i}: weight/bias shapes inconsistent")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ConfigError(f"layer {i}: input width mismatch")

    @classmethod
    def create(cls, sizes: list[int], hidden_act: str, rng: np.random.Generator,
               final_act: str = "linear") -> "DenseNetwork":
        """Seeded init: Glorot-uniform for tanh/linear layers, He-uniform for
        relu layers, zero biases."""
        weights, biases, acts = [], [], []
        for i in range(len(sizes) - 1):
            act = hidden_act if i < len(sizes) - 2 else final_act
            init = he_uniform if act == "relu" else glorot_uniform
            weights.append(init(sizes[i], sizes[i + 1], rng))
            biases.append(np.zeros(sizes[i + 1]))
            acts.append(act)
        return cls(weights, biases, acts)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def pack(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def with_params(self, flat: np.ndarray) -> "DenseNetwork":
        if flat.shape != (self.n_params,):
            raise ConfigError(f"expected {self.n_params} params, got {flat.shape}")
        weights, biases = [], []
        k = 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[k:k + w.size].reshape(w.shape).copy())
            k += w.size
            biases.append(flat[k:k + b.size].copy())
            k += b.size
        return DenseNetwork(weights, biases, list(self.activations))


# Tape-side layers: list of (W Var, b Var, activation name).

def tape_layers(root: Var, net: DenseNetwork, offset: int) -> tuple[list, int]:
    layers = []
    k = offset
    for w, b, act in zip(net.weights, net.biases, net.activations):
        wv = ad.take(root, k, k + w.size, w.shape)
        k += w.size
        bv = ad.take(root, k, k + b.size)
        k += b.size
        layers.append((wv, bv, act))
    return layers, k


def tape_dense_value(layers: list, a: Var) -> Var:
    for w, b, act in layers:
        z = ad.add(ad.matmul(a, w), b)
        if act == "tanh":
            a = ad.tanh(z)
        elif act == "relu":
            a = ad.relu(z)
        else:
            a = z
    return a


def tape_dense_derivs(layers: list, a: Var, seeds: list[Var],
                      second_index: int | None):
    """Forward pass propagating first (and one second) input derivative.

    Args:
        layers: tape layers.
        a: input activations (n, d).
        seeds: per-direction d(input)/d(coordinate) arrays, each (n, d).
        second_index: index into seeds of the direction whose second
            derivative is also propagated (None to skip).

    Returns:
        (value, [first derivatives...], second derivative or None).
    """
    das = list(seeds)
    d2a = ad.const(np.zeros_like(a.value)) if second_index is not None else None
    for w, b, act in layers:
        z = ad.add(ad.matmul(a, w), b)
        dzs = [ad.matmul(d, w) for d in das]
        d2z = ad.matmul(d2a, w) if d2a is not None else None
        if act == "tanh":
            s = ad.tanh(z)
            p = ad.sub(1.0, ad.mul(s, s))          # tanh'
            a = s
            das = [ad.mul(p, dz) for dz in dzs]
            if d2z is not None:
                dzx = dzs[second_index]
                curv = ad.mul(ad.mul(-2.0, s), p)   # tanh''
                d2a = ad.add(ad.mul(curv, ad.mul(dzx, dzx)), ad.mul(p, d2z))
        elif act == "relu":
            gatev = ad.gate(z)                      # subgradient 0 at the kink
            a = ad.relu(z)
            das = [ad.mul(gatev, dz) for dz in dzs]
            if d2z is not None:
                d2a = ad.mul(gatev, d2z)            # relu'' treated as 0
        else:
            a = z
            das = dzs
            d2a = d2z
    return a, das, d2a


# Plain numpy mirrors of the two passes above.

def np_dense_value(net: DenseNetwork, x: np.ndarray) -> np.ndarray:
    a = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = a @ w + b
        if act == "tanh":
            a = np.tanh(z)
        elif act == "relu":
            a = np.maximum(z, 0.0)
        else:
            a = z
    return a


def np_dense_derivs(net: DenseNetwork, x: np.ndarray, seeds: list[np.ndarray],
                    second_index: int | None, return_preacts: bool = False):
    a = x
    das = [s.copy() for s in seeds]
    d2a = np.zeros_like(x) if second_index is not None else None
    preacts = []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = a @ w + b
        preacts.append(z)
        dzs = [d @ w for d in das]
        d2z = d2a @ w if d2a is not None else None
        if act == "tanh":
            s = np.tanh(z)
            p = 1.0 - s * s
            a = s
            das = [p * dz for dz in dzs]
            if d2z is not None:
                dzx = dzs[second_index]
                d2a = (-2.0 * s * p) * dzx * dzx + p * d2z
        elif act == "relu":
            gate = (z > 0.0).astype(np.float64)
            a = np.maximum(z, 0.0)
            das = [gate * dz for dz in dzs]
            if d2z is not None:
                d2a = gate * d2z
        else:
            a = z
            das = dzs
            d2a = d2z
    if return_preacts:
        return a, das, d2a, preacts
    return a, das, d2a


@dataclass
class DensityNet:
    """Density surrogate (t, x) -> rho, all-tanh hidden layers."""

    net: DenseNetwork

    def __post_init__(self):
        sizes = self.net.sizes
        if sizes[0] != 2 or sizes[-1] != 1:
            raise ConfigError("density net must map 2 inputs to 1 output")

    @classmethod
    def create(cls, width: int, depth: int, rng: np.random.Generator) -> "DensityNet":
        if width < 1 or depth < 1:
            raise ConfigError("width and depth must be >= 1")
        return cls(DenseNetwork.create([2] + [width] * depth + [1], "tanh", rng))

    @staticmethod
    def default_shape(t_span: float, x_span: float) -> tuple[int, int]:
        """Heuristic (depth, width) scaled by the scenario extents, clamped."""
        depth = int(np.clip(round(8.0 * t_span / 100.0), *_DEPTH_RANGE))
        width = int(np.clip(round(20.0 * x_span / 7000.0), *_WIDTH_RANGE))
        return depth, width

    @property
    def n_params(self) -> int:
        return self.net.n_params


@dataclass
class TrajectoryNet:
    """Probe-position surrogate t -> (y_1 .. y_N), in standardized x units.

    Sum of a tanh branch and a relu branch, each 3 hidden layers of 2N
    neurons, weighed by two trainable mixing coefficients.
    """

    tanh_net: DenseNetwork
    relu_net: DenseNetwork
    mix: np.ndarray  # (2,)
    n_agents: int

    def __post_init__(self):
        self.mix = np.asarray(self.mix, dtype=np.float64)
        if self.mix.shape != (2,):
            raise ConfigError("mix must have shape (2,)")
        for name, net in (("tanh", self.tanh_net), ("relu", self.relu_net)):
            sizes = net.sizes
            if sizes[0] != 1 or sizes[-1] != self.n_agents:
                raise ConfigError(f"{name} branch must map 1 input to n_agents outputs")

    @classmethod
    def create(cls, n_agents: int, rng: np.random.Generator) -> "TrajectoryNet":
        if n_agents < 1:
            raise ConfigError("n_agents must be >= 1")
        hidden = max(2 * n_agents, 2)
        sizes = [1, hidden, hidden, hidden, n_agents]
        tanh_net = DenseNetwork.create(sizes, "tanh", rng)
        relu_net = DenseNetwork.create(sizes, "relu", rng)
        return cls(tanh_net, relu_net, np.array([0.5, 0.5]), n_agents)

    @property
    def n_params(self) -> int:
        return self.tanh_net.n_params + self.relu_net.n_params + 2


def density_derivs(dnet: DensityNet, std: Standardizer, t, x):
    """Value and physical derivatives of the density surrogate.

    Args:
        dnet: density network.
        std: coordinate map; inputs are physical and mapped internally.
        t, x: physical coordinates, scalars or matching 1-D arrays.

    Returns:
        (value, d/dt, d/dx, d2/dx2), each shaped like the broadcast input.
    """
    t_arr, x_arr = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    scalar = t_arr.ndim == 0
    t_flat, x_flat = np.atleast_1d(t_arr).ravel(), np.atleast_1d(x_arr).ravel()
    n = t_flat.size
    xin = np.column_stack([std.map_t(t_flat), std.map_x(x_flat)])
    seed_t = np.tile([std.t_scale, 0.0], (n, 1))
    seed_x = np.tile([0.0, std.x_scale], (n, 1))
    val, (d_t, d_x), d_xx = np_dense_derivs(dnet.net, xin, [seed_t, seed_x], 1)
    outs = [val[:, 0], d_t[:, 0], d_x[:, 0], d_xx[:, 0]]
    if scalar:
        return tuple(float(o[0]) for o in outs)
    return tuple(o.reshape(t_arr.shape) for o in outs)


def density_values(dnet: DensityNet, std: Standardizer, t, x) -> np.ndarray:
    """Value-only fast path of the density surrogate (physical coords)."""
    t_arr, x_arr = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    xin = np.column_stack([std.map_t(t_arr.ravel()), std.map_x(x_arr.ravel())])
    out = np_dense_value(dnet.net, xin)[:, 0]
    return out.reshape(t_arr.shape)


def trajectory_state(tnet: TrajectoryNet, std: Standardizer, t):
    """Positions and velocities of all probes at physical times t.

    The network emits standardized positions; outputs are mapped back, and
    velocities carry both chain-rule factors.

    Returns:
        (positions, velocities), each (len(t), n_agents); 1-D if t is scalar.
    """
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_flat = np.atleast_1d(t_arr).ravel()
    xin = std.map_t(t_flat)[:, None]
    seed = np.full((t_flat.size, 1), std.t_scale)
    half_len = (std.x_max - std.x_min) / 2.0

    out_t, (dout_t,), _ = np_dense_derivs(tnet.tanh_net, xin, [seed], None)
    out_r, (dout_r,), _ = np_dense_derivs(tnet.relu_net, xin, [seed], None)
    raw = tnet.mix[0] * out_t + tnet.mix[1] * out_r
    draw = tnet.mix[0] * dout_t + tnet.mix[1] * dout_r
    positions = np.asarray(std.inv_x(raw))
    velocities = half_len * draw
    if scalar:
        return positions[0], velocities[0]
    return positions, velocities
