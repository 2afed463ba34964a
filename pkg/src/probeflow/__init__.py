"""probeflow: traffic density reconstruction from probe-vehicle data.

A reference finite-volume solver for a scalar conservation-law traffic
model, probe agents advected through the solution, noisy Lagrangian
sensing, and a physics-informed learner that couples a density network
with a trajectory network to reconstruct the full density surface.
"""

from .agents import (AgentTrajectories, advance_agents,
                     integrate_trajectories, vehicle_count)
from .config import (DomainConfig, RunConfig, SensingConfig, TrainConfig,
                     fixture_config, fleet_positions, load_config, save_config)
from .errors import (ConfigError, DomainError, GeometryError, NumericsError,
                     ProbeflowError)
from .flux import FluxTriple, Greenshields, greenshields_triple
from .godunov import (CFL_SAFETY, DensityField, Domain, ScenarioSpec,
                      check_cfl, demand, godunov_numerical_flux,
                      initial_condition, simulate, step, supply)
from .losses import LossWeights, Objective, loss_coupled, loss_noiseless
from .model import ReconstructionModel
from .networks import DensityNet, DenseNetwork, TrajectoryNet
from .reporting import (BenchmarkResult, EvalReport, benchmark,
                        evaluate_model, export_density_grid,
                        export_error_heatmap, export_trajectory_overlay)
from .sensing import (MeasurementSet, NoiseConfig, Standardizer, measure,
                      sample_collocation, standardize)
from .training import (Stage, TrainOptions, TrainReport, default_stages,
                       naive_stage, naive_train, staged_train, train)

__version__ = "0.1.0"

__all__ = [
    "AgentTrajectories", "BenchmarkResult", "CFL_SAFETY", "ConfigError",
    "DenseNetwork", "DensityField", "DensityNet", "Domain", "DomainConfig",
    "DomainError", "EvalReport", "FluxTriple", "GeometryError",
    "Greenshields", "LossWeights", "MeasurementSet", "NoiseConfig",
    "NumericsError", "Objective", "ProbeflowError", "ReconstructionModel",
    "RunConfig", "ScenarioSpec", "SensingConfig", "Stage", "Standardizer",
    "TrainConfig", "TrainOptions", "TrainReport", "TrajectoryNet",
    "advance_agents", "benchmark", "check_cfl", "default_stages", "demand",
    "evaluate_model", "export_density_grid", "export_error_heatmap",
    "export_trajectory_overlay", "fixture_config", "fleet_positions",
    "godunov_numerical_flux", "greenshields_triple", "initial_condition",
    "integrate_trajectories", "load_config", "loss_coupled",
    "loss_noiseless", "measure", "naive_stage", "naive_train",
    "sample_collocation", "save_config", "simulate", "staged_train",
    "standardize", "step", "supply", "train", "vehicle_count",
    "__version__",
]
