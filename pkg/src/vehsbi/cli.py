"""Command-line pipeline driver.

Every command is a pure function of (config file, flags, master seed):
re-running with the same inputs rewrites byte-identical files. Exit codes:
0 success, 2 configuration error, 3 simulation failure, 4 training
failure, 5 singular Fisher matrix (report still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, observability
from .config import ConfigError, config_hash, default_config_dict, dump_config, load_config
from .inference import (LeakageError, TrainingDivergedError, _collect_simulations,
                        _master_seed, prior_sample, read_samples, rejection_abc,
                        run_snpe, vehicle_problem, write_samples)
from .mdn import write_mdn
from .rng import substream
from .simulator import read_trajectory, simulate, write_trajectory
from .summaries import Normalizer, write_normalizer
from .vehicle import IdentifiedParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_TRAINING = 4
EXIT_SINGULAR = 5


def _parse_theta(text: str):
    if text == "sample":
        return None
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 6:
        raise ConfigError("theta must be 'sample' or six comma-separated values")
    return IdentifiedParams.from_array(np.array(vals))


def _outdir(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_init_config(args) -> int:
    dump_config(default_config_dict(), args.path)
    print(f"wrote {args.path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    sim_config = cfg.sim_config()
    theta = _parse_theta(args.theta)
    if theta is None:
        theta = prior_sample(substream(cfg.seed, "observation", 0, 0), cfg.prior)
    elif not np.all(cfg.prior.contains(theta.as_array())):
        raise ConfigError("theta lies outside the prior box")
    record = simulate(theta, substream(cfg.seed, "observation", 0, 1), sim_config)
    out = _outdir(cfg)
    write_trajectory(record, out / "trajectory.csv", config_hash(cfg))
    if not record.valid:
        print(f"simulation aborted at sample {record.abort_sample}", file=sys.stderr)
        return EXIT_SIMULATION
    print(f"wrote {out / 'trajectory.csv'} (theta recorded in sidecar)")
    return EXIT_OK


def cmd_pilot(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    sim_config = cfg.sim_config()
    seed = _master_seed(substream(cfg.seed, "generic"))
    problem = vehicle_problem(sim_config, cfg.prior, threads=args.threads)
    n = cfg.train.pilot_sims
    gen = substream(seed, "pilot_theta").generator()
    _, vals, n_invalid = _collect_simulations(
        problem, lambda m: cfg.prior.sample(gen, m), n, seed, "pilot_sim", 0)
    if n_invalid > 0.1 * n:
        print(f"{n_invalid} invalid pilot simulations (>10%)", file=sys.stderr)
        return EXIT_SIMULATION
    norm = Normalizer(mean=vals.mean(axis=0), std=vals.std(axis=0, ddof=1),
                      pilot_count=n)
    out = _outdir(cfg)
    write_normalizer(norm, out / "normalizer.json")
    print(f"wrote {out / 'normalizer.json'} ({n} pilot simulations, "
          f"{n_invalid} resampled)")
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    sim_config = cfg.sim_config()
    observation = read_trajectory(args.observation)
    out = _outdir(cfg)
    try:
        model, samples, reports, norm = run_snpe(
            observation, cfg.train, sim_config,
            substream(cfg.seed, "generic"), box=cfg.prior,
            threads=args.threads)
    except (TrainingDivergedError, LeakageError) as exc:
        (out / "rounds_report.json").write_text(
            json.dumps({"error": str(exc)}, indent=1) + "\n")
        print(f"inference failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    write_mdn(model, out / "model.json",
              extra={"config_hash": config_hash(cfg)})
    write_samples(samples, out / "posterior_samples.csv")
    write_normalizer(norm, out / "normalizer.json")
    (out / "rounds_report.json").write_text(
        json.dumps(reports, sort_keys=True, indent=1) + "\n")
    print(f"wrote model, {samples.n} posterior samples and round reports to {out}")
    return EXIT_OK


def cmd_abc(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    sim_config = cfg.sim_config()
    observation = read_trajectory(args.observation)
    try:
        samples = rejection_abc(observation, args.n_sims, args.accept_fraction,
                                substream(cfg.seed, "generic"), sim_config,
                                box=cfg.prior, pilot_sims=cfg.train.pilot_sims,
                                threads=args.threads)
    except RuntimeError as exc:
        print(f"abc failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    out = _outdir(cfg)
    write_samples(samples, out / "abc_samples.csv")
    print(f"wrote {samples.n} accepted samples to {out / 'abc_samples.csv'}")
    return EXIT_OK


def cmd_fisher(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    sim_config = cfg.sim_config()
    if args.theta_star == "nominal":
        theta = IdentifiedParams(l_f=1.3, h_cog=0.5, d_Ckf=0.0, d_Ckr=0.0,
                                 d_Caf=0.0, d_Car=0.0)
    else:
        theta = _parse_theta(args.theta_star)
        if theta is None:
            raise ConfigError("theta-star must be 'nominal' or six values")
    seed = _master_seed(substream(cfg.seed, "generic"))
    problem = vehicle_problem(sim_config, cfg.prior, threads=args.threads)
    gen = substream(seed, "pilot_theta").generator()
    try:
        _, pvals, _ = _collect_simulations(
            problem, lambda m: cfg.prior.sample(gen, m), cfg.train.pilot_sims,
            seed, "pilot_sim", 0)
        norm = Normalizer(mean=pvals.mean(axis=0), std=pvals.std(axis=0, ddof=1),
                          pilot_count=cfg.train.pilot_sims)
        report = observability.fisher_matrix(
            theta, cfg.fd_steps(), int(cfg.fisher_doc["n_sims"]),
            substream(cfg.seed, "generic"), sim_config, norm, box=cfg.prior)
    except RuntimeError as exc:
        print(f"fisher computation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    out = _outdir(cfg)
    observability.write_fisher_report(report, out / "fisher_report.json")
    print(f"wrote {out / 'fisher_report.json'} "
          f"(condition number {report.condition_number:.3g})")
    if report.singular:
        print("fisher matrix is singular at tolerance", file=sys.stderr)
        return EXIT_SINGULAR
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    try:
        samples = read_samples(args.samples)
        if samples.samples.ndim != 2 or samples.samples.shape[1] != 6 \
                or samples.n < 2:
            raise ConfigError("samples file must hold an (n>=2, 6) matrix")
    except (OSError, ValueError) as exc:
        print(f"cannot read samples: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    truth = _parse_theta(args.truth) if args.truth else None
    out = _outdir(cfg)
    table = analysis.posterior_table(samples, truth, cfg.prior)
    analysis.write_table(table, out / "posterior_table.csv")
    written = analysis.pairplot_export(samples, truth, cfg.prior,
                                       out / "pairplot")
    print(f"wrote {out / 'posterior_table.csv'} and {len(written)} "
          f"pair-plot files under {out / 'pairplot'}")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for simulation batches")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vehsbi",
        description="Vehicle COG and tire-stiffness identification by "
                    "simulation-based inference")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="write the default config file")
    p.add_argument("--path", default="config.json")
    p.set_defaults(fn=cmd_init_config)

    p = sub.add_parser("simulate", help="simulate one observation trajectory")
    _add_common(p)
    p.add_argument("--theta", default="sample",
                   help="'sample' or six comma-separated parameter values")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("pilot", help="fit the summary normalizer from prior sims")
    _add_common(p)
    p.set_defaults(fn=cmd_pilot)

    p = sub.add_parser("infer", help="sequential neural posterior estimation")
    _add_common(p)
    p.add_argument("--observation", required=True, help="trajectory CSV path")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("abc", help="rejection-ABC baseline")
    _add_common(p)
    p.add_argument("--observation", required=True)
    p.add_argument("--n-sims", type=int, default=20000)
    p.add_argument("--accept-fraction", type=float, default=0.01)
    p.set_defaults(fn=cmd_abc)

    p = sub.add_parser("fisher", help="Fisher-information observability check")
    _add_common(p)
    p.add_argument("--theta-star", default="nominal",
                   help="'nominal' or six comma-separated values")
    p.set_defaults(fn=cmd_fisher)

    p = sub.add_parser("analyze", help="posterior table and pair plots")
    _add_common(p)
    p.add_argument("--samples", required=True, help="posterior samples CSV")
    p.add_argument("--truth", default=None,
                   help="six comma-separated true values (optional)")
    p.set_defaults(fn=cmd_analyze)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
