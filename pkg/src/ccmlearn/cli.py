"""Command-line entry point: gen-data, train, trajopt, track, bench, report.

Exit codes: 0 success, 2 configuration/usage error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import core
from .core import (Dataset, TrainerConfig, load, load_config, load_dataset,
                   load_model, rng_stream, save, save_model)
from .demos import DemoConfig, build_dataset
from .errors import CcmlearnError, ConfigError, ParseError, SolverFailure, VersionError
from .harness import (BenchConfig, benchmark_initial_conditions, emit_report,
                      final_time_for, run_benchmark, summarize)
from .models import CertifiedModel, MetricModel
from .pvtol import PvtolParams, pvtol_dynamics
from .tracking import track_closed_loop, tvlqr_gains
from .trajopt import NlpConfig, NominalTrajectory, cheb_grid, solve_trajopt
from .trainer import FeatureConfig, make_bases, ridge_fit, sndl_fit, dump_history
from .constraints import build_constraint_set

MU_DEFAULTS = {"nr": 0.0, "rr": 1e-6, "ccmr": 1e-3}


def _parse_state(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 6:
        raise ConfigError("state must be 6 comma-separated numbers")
    return np.array(vals)


def save_nominal(nom: NominalTrajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# status={nom.status} kkt={nom.kkt_residual!r} T={nom.T!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "px", "pz", "phi", "vx", "vz", "phidot", "u1", "u2"])
        for t, x, u in zip(nom.times, nom.x_nodes, nom.u_nodes):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in x]
                            + [repr(float(v)) for v in u])


def load_nominal(path) -> NominalTrajectory:
    status, kkt = "ok", 0.0
    times, X, U = [], [], []
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("#"):
            for tok in first[1:].split():
                key, _, val = tok.partition("=")
                if key == "status":
                    status = val
                elif key == "kkt":
                    kkt = float(val)
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader, None)
        for row in reader:
            vals = [float(v) for v in row]
            times.append(vals[0])
            X.append(vals[1:7])
            U.append(vals[7:9])
    times = np.array(times)
    return NominalTrajectory(times=times, x_nodes=np.array(X), u_nodes=np.array(U),
                             cost=float("nan"), kkt_residual=kkt, status=status,
                             T=float(times[-1]))


def save_trajectory(traj, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "px", "pz", "phi", "vx", "vz", "phidot", "u1", "u2"])
        n = len(traj.times)
        for k in range(n):
            u = traj.controls[min(k, n - 2)] if n > 1 else np.zeros(2)
            writer.writerow([repr(float(traj.times[k]))]
                            + [repr(float(v)) for v in traj.states[k]]
                            + [repr(float(v)) for v in u])


def cmd_gen_data(args):
    cfg = load_config(DemoConfig, args.config) if args.config else DemoConfig()
    if args.seed is not None:
        cfg = DemoConfig(**{**cfg.__dict__, "seed": args.seed})
    ds = build_dataset(cfg, PvtolParams())
    save(ds, args.out)
    print(f"wrote {len(ds)} tuples ({len(set(ds.traj_ids))} demonstrations) to {args.out}")
    return 0


def cmd_train(args):
    data = load_dataset(args.data)
    if args.n is not None:
        data = data.subset(args.n)
        if len(data) < args.n:
            raise ConfigError(f"dataset has only {len(data)} tuples, need {args.n}")
    cfg = load_config(TrainerConfig, args.config) if args.config else TrainerConfig(
        mu_f=MU_DEFAULTS[args.model])
    if args.seed is not None:
        cfg = TrainerConfig(**{**cfg.__dict__, "seed": args.seed})
    bases = make_bases(cfg.seed, FeatureConfig())
    if args.model in ("nr", "rr"):
        dyn = ridge_fit(data, cfg.mu_f if args.config else MU_DEFAULTS[args.model],
                        cfg.mu_b, bases[0])
        model = CertifiedModel(dynamics=dyn,
                               metric=MetricModel.identity(bases[1], bases[2]),
                               lam=cfg.delta_lambda)
        history = []
    else:
        cs = build_constraint_set(data.states(), args.nc,
                                  rng_stream(cfg.seed, "constraint_points"))
        model, history = sndl_fit(data, cs, cfg, bases=bases, verbose=args.verbose)
    save_model(model, args.out)
    if args.history and history:
        dump_history(history, args.history)
    print(f"trained {args.model} on N={len(data)} tuples -> {args.out}")
    if history:
        last = history[-1]
        print(f"  iterations={len(history)}  max_nu={last.max_nu:.4f}  delta={last.delta:.4f}")
    return 0


def cmd_trajopt(args):
    model = load_model(args.model)
    x0 = _parse_state(args.x0)
    goal = _parse_state(args.goal) if args.goal else np.zeros(6)
    bench = BenchConfig()
    T = args.T if args.T is not None else final_time_for(x0, bench)
    grid = cheb_grid(args.nodes)
    nom = solve_trajopt(model.dynamics, x0, goal, T, grid, NlpConfig())
    save_nominal(nom, args.out)
    print(f"trajopt status={nom.status} cost={nom.cost:.4f} kkt={nom.kkt_residual:.2e} -> {args.out}")
    return 0 if nom.status == "ok" else 3


def cmd_track(args):
    model = load_model(args.model)
    nom = load_nominal(args.nominal)
    plant = PvtolParams()
    cfg = BenchConfig()
    if args.open_loop:
        gains = None
    else:
        Q = np.diag(cfg.q_diag)
        gains = tvlqr_gains(model.dynamics, nom, Q, np.diag(cfg.r_diag), cfg.qf_scale * Q)
    res = track_closed_loop(lambda x, u: pvtol_dynamics(x, u, plant), nom, gains)
    save_trajectory(res.traj, args.out)
    from .harness import classify_stability, rms_error
    rms = rms_error(res.traj, nom)
    div = classify_stability(res.traj, nom, res.diverged)
    print(f"tracking rms={rms:.4f} diverged={div} -> {args.out}")
    return 0


def cmd_bench(args):
    cfg = load_config(BenchConfig, args.config) if args.config else BenchConfig()
    if args.seed is not None:
        cfg = BenchConfig(**{**cfg.__dict__, "seed": args.seed})
    models = {}
    for spec_item in args.models.split(","):
        kind, _, path = spec_item.partition("=")
        kind = kind.strip().upper()
        if kind not in ("NR", "RR", "CCMR") or not path:
            raise ConfigError(f"bad --models entry {spec_item!r}; use kind=path")
        if not os.path.exists(path):
            raise ConfigError(f"missing model file for {kind}: expected at {path}")
        models[kind] = load_model(path)
    rows, rows_open = run_benchmark(models, args.n, cfg, verbose=args.verbose)
    written = emit_report(rows, args.out, rows_open)
    for s in summarize(rows):
        print(f"{s['model']:5s} N={s['N']}: median rms {s['median']:.3f}, "
              f"{s['n_diverged']}/{s['n']} diverged")
    print("wrote " + ", ".join(written))
    return 0


def cmd_report(args):
    rows = core.load_results(args.results)
    rows_open = core.load_results(args.open_results) if args.open_results else None
    written = emit_report(rows, args.out, rows_open)
    print("wrote " + ", ".join(written))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="ccmlearn",
                                 description="learn stabilizable dynamics and benchmark them on a planar quadrotor")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-data", help="generate a demonstration dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="DemoConfig JSON file")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="fit a model (nr, rr, or ccmr)")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=["nr", "rr", "ccmr"], required=True)
    p.add_argument("--n", type=int, help="train on an evenly spread subset of this size")
    p.add_argument("--nc", type=int, default=400, help="total constraint points (ccmr)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TrainerConfig JSON file")
    p.add_argument("--history", help="write per-iteration diagnostics CSV here")
    p.add_argument("--seed", type=int)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("trajopt", help="minimum-energy transfer on a learned model")
    p.add_argument("--model", required=True)
    p.add_argument("--x0", required=True, help="6 comma-separated start-state values")
    p.add_argument("--goal", help="6 comma-separated goal-state values (default hover at origin)")
    p.add_argument("--T", type=float, help="final time (default from distance rule)")
    p.add_argument("--nodes", type=int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_trajopt)

    p = sub.add_parser("track", help="track a nominal on the true plant")
    p.add_argument("--model", required=True)
    p.add_argument("--nominal", required=True)
    p.add_argument("--open-loop", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_track)

    p = sub.add_parser("bench", help="matched-protocol benchmark of trained models")
    p.add_argument("--models", required=True, help="e.g. nr=nr.json,rr=rr.json,ccmr=ccmr.json")
    p.add_argument("--n", type=int, required=True, help="training size label for the report")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="BenchConfig JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("report", help="summaries and box plot from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--open-results", dest="open_results")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ParseError, VersionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
