"""Reconstruction model: both networks plus the trainable physics scalars.

Parameters live in one flat float64 vector with a fixed block layout:

    density    | trajectory (tanh branch, relu branch, mix) | viscosity | meas_bias

``viscosity`` is stored unconstrained and squared wherever it is used, so the
effective dissipation is always non-negative. ``meas_bias`` is the per-probe
estimate of a constant density-measurement bias.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .flux import Greenshields
from .networks import DenseNetwork, DensityNet, TrajectoryNet
from .sensing import Standardizer

_CKPT_SCHEMA = "probeflow.model-checkpoint/1"

BLOCKS = ("density", "trajectory", "viscosity", "meas_bias")


@dataclass(frozen=True)
class ParamBlock:
    name: str
    start: int
    stop: int


@dataclass(frozen=True)
class ParamLayout:
    blocks: tuple[ParamBlock, ...]
    size: int

    def indices(self, names) -> np.ndarray:
        """Sorted flat indices of the named blocks."""
        wanted = set(names)
        unknown = wanted - set(BLOCKS)
        if unknown:
            raise ConfigError(f"unknown parameter blocks: {sorted(unknown)}")
        idx = [np.arange(b.start, b.stop) for b in self.blocks if b.name in wanted]
        return np.concatenate(idx) if idx else np.empty(0, dtype=int)

    def block(self, name: str) -> ParamBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise ConfigError(f"unknown parameter block {name!r}")


@dataclass
class ReconstructionModel:
    """Trainable state of the reconstruction problem."""

    density_net: DensityNet
    trajectory_net: TrajectoryNet
    viscosity: float              # squared where used
    meas_bias: np.ndarray         # (n_agents,)
    std: Standardizer
    flux: Greenshields
    init_seed: int | None = None

    def __post_init__(self):
        self.meas_bias = np.asarray(self.meas_bias, dtype=np.float64)
        if self.meas_bias.shape != (self.trajectory_net.n_agents,):
            raise ConfigError("meas_bias length must equal the probe count")

    @property
    def n_agents(self) -> int:
        return self.trajectory_net.n_agents

    def layout(self) -> ParamLayout:
        n_density = self.density_net.n_params
        n_traj = self.trajectory_net.n_params
        n_bias = self.meas_bias.size
        edges = np.cumsum([0, n_density, n_traj, 1, n_bias])
        blocks = tuple(ParamBlock(name, int(edges[i]), int(edges[i + 1]))
                       for i, name in enumerate(BLOCKS))
        return ParamLayout(blocks, int(edges[-1]))

    def pack(self) -> np.ndarray:
        return np.concatenate([
            self.density_net.net.pack(),
            self.trajectory_net.tanh_net.pack(),
            self.trajectory_net.relu_net.pack(),
            self.trajectory_net.mix,
            [self.viscosity],
            self.meas_bias,
        ])

    def with_params(self, flat: np.ndarray) -> "ReconstructionModel":
        layout = self.layout()
        if flat.shape != (layout.size,):
            raise ConfigError(f"expected {layout.size} params, got {flat.shape}")
        d = layout.block("density")
        t = layout.block("trajectory")
        v = layout.block("viscosity")
        m = layout.block("meas_bias")
        n_tanh = self.trajectory_net.tanh_net.n_params
        n_relu = self.trajectory_net.relu_net.n_params
        traj_flat = flat[t.start:t.stop]
        new_traj = TrajectoryNet(
            tanh_net=self.trajectory_net.tanh_net.with_params(traj_flat[:n_tanh]),
            relu_net=self.trajectory_net.relu_net.with_params(traj_flat[n_tanh:n_tanh + n_relu]),
            mix=traj_flat[n_tanh + n_relu:].copy(),
            n_agents=self.n_agents,
        )
        return replace(
            self,
            density_net=DensityNet(self.density_net.net.with_params(flat[d.start:d.stop])),
            trajectory_net=new_traj,
            viscosity=float(flat[v.start]),
            meas_bias=flat[m.start:m.stop].copy(),
        )

    @property
    def viscosity_sq(self) -> float:
        return self.viscosity ** 2

    # Checkpoint: one JSON header line + flat little-endian float64 params.
    def save(self, path: str) -> None:
        header = {
            "schema": _CKPT_SCHEMA,
            "density_sizes": self.density_net.net.sizes,
            "density_acts": self.density_net.net.activations,
            "trajectory_sizes": self.trajectory_net.tanh_net.sizes,
            "n_agents": self.n_agents,
            "standardizer": self.std.to_dict(),
            "v_f": self.flux.v_f,
            "init_seed": self.init_seed,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header).encode("ascii") + b"\n")
            fh.write(np.ascontiguousarray(self.pack(), dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str) -> "ReconstructionModel":
        with open(path, "rb") as fh:
            raw = fh.read()
        nl = raw.find(b"\n")
        if nl < 0:
            raise ConfigError(f"{path}: missing header line")
        try:
            header = json.loads(raw[:nl].decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: bad header: {exc}") from exc
        if header.get("schema") != _CKPT_SCHEMA:
            raise ConfigError(f"{path}: unknown schema {header.get('schema')!r}")
        try:
            n_agents = int(header["n_agents"])
            model = cls.initial(
                density_sizes=[int(s) for s in header["density_sizes"]],
                n_agents=n_agents,
                std=Standardizer.from_dict(header["standardizer"]),
                v_f=float(header["v_f"]),
                seed=0,
                density_acts=header.get("density_acts"),
                trajectory_sizes=[int(s) for s in header["trajectory_sizes"]],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: bad header fields: {exc}") from exc
        flat = np.frombuffer(raw[nl + 1:], dtype="<f8").astype(np.float64)
        layout = model.layout()
        if flat.size != layout.size:
            raise ConfigError(f"{path}: expected {layout.size} params, found {flat.size}")
        model = model.with_params(flat)
        model.init_seed = header.get("init_seed")
        return model

    @classmethod
    def initial(cls, density_sizes: list[int], n_agents: int, std: Standardizer,
                v_f: float, seed: int, viscosity_init: float = 0.1,
                density_acts: list[str] | None = None,
                trajectory_sizes: list[int] | None = None) -> "ReconstructionModel":
        """Seeded fresh model with zero bias estimate."""
        rng = np.random.default_rng(seed)
        if density_acts is None:
            dnet = DensityNet(DenseNetwork.create(density_sizes, "tanh", rng))
        else:
            hidden = density_acts[0] if density_acts else "tanh"
            dnet = DensityNet(DenseNetwork.create(density_sizes, hidden, rng,
                                                  final_act=density_acts[-1]))
        if trajectory_sizes is None:
            tnet = TrajectoryNet.create(n_agents, rng)
        else:
            tnet = TrajectoryNet(
                tanh_net=DenseNetwork.create(trajectory_sizes, "tanh", rng),
                relu_net=DenseNetwork.create(trajectory_sizes, "relu", rng),
                mix=np.array([0.5, 0.5]),
                n_agents=n_agents,
            )
        return cls(dnet, tnet, float(viscosity_init), np.zeros(n_agents),
                   std, Greenshields(v_f), init_seed=seed)
