"""Command-line interface.

Subcommands mirror the pipeline stages and share artifact names, so a
chained invocation (simulate, measure, train, evaluate, each pointed at
the same output directory) produces byte-identical results to the
one-shot `run` command. Exit codes: 0 on success, 2 for configuration
problems, 3 for runtime failures (domain violations, degenerate sensing
geometry, non-finite numerics).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .agents import integrate_trajectories
from .config import RunConfig, fixture_config, fleet_positions, load_config, save_config
from .errors import ConfigError, DomainError, GeometryError, NumericsError
from .flux import Greenshields
from .godunov import DensityField, simulate
from .model import ReconstructionModel
from .reporting import (benchmark, evaluate_model, export_density_grid,
                        export_error_heatmap, export_trajectory_overlay)
from .sensing import MeasurementSet, measure, sample_collocation
from .training import naive_train, staged_train

FIELD_BIN = "field.bin"
TRAJ_CSV = "trajectories.csv"
MS_JSON = "measurements.json"
MODEL_BIN = "model.bin"
TRAIN_JSON = "train_report.json"
EVAL_JSON = "evaluation.json"
BENCH_JSON = "benchmark.json"
DENSITY_CSV = "density_grid.csv"
HEATMAP_CSV = "error_heatmap.csv"
OVERLAY_CSV = "trajectory_overlay.csv"


def _load_cfg(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return fixture_config(noisy=getattr(args, "noisy", False))


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _dump_json(obj: dict, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _simulate_pair(cfg: RunConfig):
    domain = cfg.build_domain()
    field = simulate(cfg.scenario, domain)
    traj = integrate_trajectories(Greenshields(cfg.scenario.v_f), field,
                                  fleet_positions(cfg))
    return field, traj


def _measure_set(cfg: RunConfig, field: DensityField) -> MeasurementSet:
    traj = integrate_trajectories(Greenshields(cfg.scenario.v_f), field,
                                  fleet_positions(cfg))
    ms = measure(field, traj, cfg.sensing.n_data, cfg.noise)
    return sample_collocation(ms, cfg.sensing.n_f, cfg.sensing.n_g,
                              seed=cfg.sensing.colloc_seed)


def _train_model(cfg: RunConfig, ms: MeasurementSet, verbose: bool):
    trainer = staged_train if cfg.train.mode == "staged" else naive_train
    return trainer(ms, cfg.train.options(), seed=cfg.train.seed,
                   verbose=verbose)


def _evaluate(cfg: RunConfig, field: DensityField,
              model: ReconstructionModel, out: str, export: bool) -> dict:
    traj = integrate_trajectories(Greenshields(cfg.scenario.v_f), field,
                                  fleet_positions(cfg))
    report = evaluate_model(model, field, traj)
    _dump_json(report.to_dict(), os.path.join(out, EVAL_JSON))
    if export:
        export_density_grid(model, field.domain, os.path.join(out, DENSITY_CSV))
        export_error_heatmap(model, field, os.path.join(out, HEATMAP_CSV))
        export_trajectory_overlay(model, traj, os.path.join(out, OVERLAY_CSV))
    return report.to_dict()


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    field, traj = _simulate_pair(cfg)
    field.save(os.path.join(out, FIELD_BIN))
    traj.to_csv(os.path.join(out, TRAJ_CSV))
    print(f"simulated {field.values.shape[0] - 1} steps x "
          f"{field.values.shape[1]} cells -> {out}/{FIELD_BIN}")
    return 0


def cmd_measure(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    field = DensityField.load(args.field or os.path.join(out, FIELD_BIN))
    ms = _measure_set(cfg, field)
    ms.save(os.path.join(out, MS_JSON))
    print(f"measured {ms.n_data} instants x {ms.n_agents} probes "
          f"(collocation acceptance {ms.colloc_acceptance:.3f}) "
          f"-> {out}/{MS_JSON}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    ms = MeasurementSet.load(args.measurements or os.path.join(out, MS_JSON))
    model, report = _train_model(cfg, ms, args.verbose)
    model.save(os.path.join(out, MODEL_BIN))
    _dump_json(report.to_dict(), os.path.join(out, TRAIN_JSON))
    print(f"trained ({cfg.train.mode}) final loss {report.final_loss:.6e} "
          f"in {report.total_seconds:.1f}s -> {out}/{MODEL_BIN}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    field = DensityField.load(args.field or os.path.join(out, FIELD_BIN))
    model = ReconstructionModel.load(args.model or os.path.join(out, MODEL_BIN))
    report = _evaluate(cfg, field, model, out, args.export)
    print(f"generalization error {report['generalization_error']:.4f} "
          f"(covered region, transient excluded) -> {out}/{EVAL_JSON}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    field, traj = _simulate_pair(cfg)
    field.save(os.path.join(out, FIELD_BIN))
    traj.to_csv(os.path.join(out, TRAJ_CSV))
    ms = _measure_set(cfg, field)
    ms.save(os.path.join(out, MS_JSON))
    model, train_report = _train_model(cfg, ms, args.verbose)
    model.save(os.path.join(out, MODEL_BIN))
    _dump_json(train_report.to_dict(), os.path.join(out, TRAIN_JSON))
    report = _evaluate(cfg, field, model, out, args.export)
    print(f"run complete: final loss {train_report.final_loss:.6e}, "
          f"generalization error {report['generalization_error']:.4f} -> {out}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    for m in modes:
        if m not in ("staged", "naive"):
            raise ConfigError(f"unknown benchmark mode {m!r}")
    if not modes:
        raise ConfigError("no benchmark modes given")
    result = benchmark(cfg.scenario, cfg.build_domain(), fleet_positions(cfg),
                       cfg.sensing.n_data, cfg.sensing.n_f, cfg.sensing.n_g,
                       cfg.noise, cfg.train.options(), cfg.train.seed,
                       n_runs=args.runs, modes=modes,
                       processes=args.processes, verbose=args.verbose)
    _dump_json(result.to_dict(), os.path.join(out, BENCH_JSON))
    stats = result.stats()
    bits = []
    for mode in modes:
        med = stats["modes"][mode]["error_median"]
        bits.append(f"{mode} median {med:.4f}" if med is not None
                    else f"{mode} (no successful runs)")
    ratio = stats.get("median_error_ratio_naive_over_staged")
    if ratio is not None:
        bits.append(f"ratio {ratio:.2f}")
    print(f"benchmark {args.runs} runs ({stats['n_failed']} failed): "
          + ", ".join(bits) + f" -> {out}/{BENCH_JSON}")
    return 0


def cmd_config(args) -> int:
    cfg = fixture_config(noisy=args.noisy)
    save_config(cfg, args.path)
    print(f"wrote {'noisy' if args.noisy else 'noiseless'} fixture config "
          f"to {args.path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probeflow",
        description="Traffic density reconstruction from probe vehicles: "
                    "reference solver, sensing simulation, physics-informed "
                    "training, and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="run configuration JSON "
                       "(default: built-in fixture)")
        p.add_argument("--noisy", action="store_true",
                       help="with no --config: use the noisy fixture")
        if needs_out:
            p.add_argument("--out", required=True,
                           help="output directory for artifacts")

    p = sub.add_parser("simulate", help="solve the reference density field")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("measure", help="generate noisy probe measurements")
    common(p)
    p.add_argument("--field", help=f"density field file (default <out>/{FIELD_BIN})")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("train", help="train the reconstruction model")
    common(p)
    p.add_argument("--measurements",
                   help=f"measurement set file (default <out>/{MS_JSON})")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained model")
    common(p)
    p.add_argument("--field", help=f"density field file (default <out>/{FIELD_BIN})")
    p.add_argument("--model", help=f"model file (default <out>/{MODEL_BIN})")
    p.add_argument("--export", action="store_true",
                   help="also write density/error/trajectory CSVs")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline in one process")
    common(p)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--export", action="store_true",
                   help="also write density/error/trajectory CSVs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("benchmark", help="paired staged-vs-naive sweep")
    common(p)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--processes", type=int, default=None,
                   help="worker processes (1 = serial)")
    p.add_argument("--modes", default="staged,naive",
                   help="comma-separated subset of staged,naive")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("config", help="write a fixture configuration file")
    p.add_argument("path", help="destination JSON path")
    p.add_argument("--noisy", action="store_true")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, GeometryError, NumericsError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
