"""Command-line entry point: ``rmpmab {simulate,certify,estimate,replay,gen-synthetic}``."""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from . import rng as rngmod
from .config import RunConfig, load_config, load_profile
from .errors import ConfigError, OracleFailure, RmpmabError, SchemaError
from .estimation import mle_from_counts, parameters_csv
from .markov import ChainParams
from .oracle import TruncatedArmMdp, certify, crossing_violations, passive_set_sweep
from .policies import FiniteArm
from .replay import SyntheticSpec, generate_synthetic, load_dataset, replay_policy, write_dataset
from .simulator import aggregate, default_threads, regret_csv, run_experiment, write_results

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_manifest(out_dir, command, cfg: RunConfig | None, seed, started, outputs, extra=None):
    """JSON record of what was run and which files it produced."""
    manifest = {
        "command": command,
        "config_digest": cfg.digest if cfg is not None else None,
        "config_source": cfg.source if cfg is not None else None,
        "seed": seed,
        "code_version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": [{"path": os.path.relpath(p, out_dir), "sha256": _sha256(p)} for p in outputs],
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    _write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load(args) -> RunConfig:
    if args.config and args.profile:
        raise ConfigError("give either --config or --profile, not both")
    if args.profile:
        cfg = load_profile(args.profile)
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise ConfigError("a --config file or --profile name is required")
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


# -- subcommands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    started = _now()
    cfg = _load(args)
    if cfg.experiment is None:
        raise ConfigError("config has no [experiment] section", source=cfg.source)
    exp = cfg.experiment
    result = run_experiment(exp, threads=args.threads, keep_trials=args.per_trial)
    outputs = write_results(result, args.out, per_trial=args.per_trial)
    for label, trace in result.traces.items():
        print(f"{label}: mean cumulative regret {trace.final_mean:.1f} +/- {trace.final_stderr:.1f} at T={exp.horizon}")
    write_manifest(args.out, "simulate", cfg, exp.seed, started, outputs,
                   {"experiment": exp.name, "trials": exp.trials, "horizon": exp.horizon})
    return EXIT_OK


def certification_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "m", "gamma", "closed_form", "oracle", "abs_diff"])
    for r in rows:
        w.writerow([r.j, r.m, repr(r.gamma), repr(float(r.closed_form)), repr(float(r.oracle)), repr(float(r.abs_diff))])
    return buf.getvalue()


def cmd_certify(args) -> int:
    started = _now()
    cfg = _load(args)
    c = cfg.certify
    if c is None:
        raise ConfigError("config has no [certify] section", source=cfg.source)
    arm = FiniteArm(ChainParams(c.alpha, c.beta), c.processes)
    rows = certify(arm, c.gammas, c.js, c.ms, c.max_delay, c.tol)
    path = _write(os.path.join(args.out, "certify.csv"), certification_csv(rows))
    worst = max(rows, key=lambda r: r.abs_diff)
    violations = 0
    if args.indexability:
        states = [(j, m) for j in c.js for m in c.ms]
        for g in c.gammas:
            mdp = TruncatedArmMdp(arm, c.max_delay, g)
            grid = np.linspace(-1.0, c.processes + 1.0, args.sweep_points)
            violations += len(crossing_violations(passive_set_sweep(mdp, grid), states))
    print(f"certified {len(rows)} states; max abs diff {worst.abs_diff:.3e} at j={worst.j}, m={worst.m}, "
          f"gamma={worst.gamma} (threshold {c.threshold:g})")
    if args.indexability:
        print(f"indexability sweep: {violations} violation(s)")
    write_manifest(args.out, "certify", cfg, None, started, [path],
                   {"max_abs_diff": worst.abs_diff, "threshold": c.threshold})
    if args.strict and (worst.abs_diff >= c.threshold or violations):
        return EXIT_FAILURE
    return EXIT_OK


def cmd_estimate(args) -> int:
    started = _now()
    epoch_range = _parse_range(args.epochs) if args.epochs else None
    ds = load_dataset(args.trace, epoch_range, args.n_processes)
    rows = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for k in range(ds.n_arms):
            rows.append((ds.arm_ids[k], mle_from_counts(ds.trace(k))))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    path = _write(args.out, parameters_csv(rows))
    write_manifest(os.path.dirname(os.path.abspath(args.out)), "estimate", None, None, started, [path],
                   {"trace": str(args.trace)})
    return EXIT_OK


def cmd_replay(args) -> int:
    started = _now()
    cfg = _load(args)
    r = cfg.replay
    if r is None:
        raise ConfigError("config has no [replay] section", source=cfg.source)
    if not cfg.policies:
        raise ConfigError("config has no [policy.<label>] sections", source=cfg.source)
    path = args.dataset or r.dataset
    if not path:
        raise ConfigError("no dataset: pass --dataset or set [replay] dataset", key="replay.dataset", source=cfg.source)
    train = load_dataset(path, (0, r.train_epochs), r.n_processes)
    test = load_dataset(path, (r.train_epochs, r.train_epochs + r.eval_epochs), r.n_processes)
    if len(test.epochs) == 0:
        raise SchemaError(f"dataset has no epochs at or after {r.train_epochs}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fits = [mle_from_counts(train.trace(k)) for k in range(train.n_arms)]
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    params = [f.params for f in fits]
    outputs = [_write(os.path.join(args.out, "fitted-parameters.csv"), parameters_csv(zip(train.arm_ids, fits)))]
    name = os.path.splitext(os.path.basename(path))[0]
    for spec in cfg.policies:
        g = rngmod.policy_stream(r.seed, 0, spec.label)
        trace = replay_policy(test, spec, params, rng=g)
        agg = aggregate(spec.label, [trace])
        outputs.append(_write(os.path.join(args.out, f"{name}-{spec.label}.csv"), regret_csv(agg)))
        print(f"{spec.label}: cumulative regret {trace.final_regret} over {len(test.epochs)} epochs")
    write_manifest(args.out, "replay", cfg, r.seed, started, outputs, {"dataset": str(path)})
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    started = _now()
    spec = SyntheticSpec()
    seed = 0
    if args.config or args.profile:
        cfg = _load(args)
        spec = cfg.synthetic or spec
        seed = cfg.replay.seed if cfg.replay else seed
    if args.seed is not None:
        seed = args.seed
    ds, truth = generate_synthetic(seed, spec)
    os.makedirs(args.out, exist_ok=True)
    data_path = os.path.join(args.out, "synthetic-trace.csv")
    write_dataset(ds, data_path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arm_id", "alpha", "beta"])
    for a, p in zip(ds.arm_ids, truth):
        w.writerow([a, repr(p.alpha), repr(p.beta)])
    truth_path = _write(os.path.join(args.out, "synthetic-parameters.csv"), buf.getvalue())
    write_manifest(args.out, "gen-synthetic", None, seed, started, [data_path, truth_path])
    print(f"wrote {ds.n_arms} arms x {len(ds.epochs)} epochs to {data_path}")
    return EXIT_OK


def _parse_range(text):
    lo, hi = text.split(":")
    return int(lo), int(hi)


# -- argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmpmab", description="Restless multi-process bandit tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="path to a config file")
        sp.add_argument("--profile", help="name of a shipped profile (see RMPMAB_PROFILE_DIR)")
        if seed:
            sp.add_argument("--seed", type=int, help="override the config seed")

    s = sub.add_parser("simulate", help="Monte Carlo regret simulation")
    common(s)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--threads", type=int, default=default_threads(), help="worker processes for trials")
    s.add_argument("--per-trial", action="store_true", help="also write one CSV per trial")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("certify", help="closed-form index against the value-iteration oracle")
    common(c, seed=False)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--strict", action="store_true", help="exit nonzero when the max diff reaches the threshold")
    c.add_argument("--indexability", action="store_true", help="also sweep subsidies and count crossing violations")
    c.add_argument("--sweep-points", type=int, default=41)
    c.add_argument("--threads", type=int, default=1, help="accepted for symmetry; certification runs serially")
    c.set_defaults(func=cmd_certify)

    e = sub.add_parser("estimate", help="fit (alpha, beta) per arm from a trace CSV")
    e.add_argument("--trace", required=True)
    e.add_argument("--out", required=True, help="parameter CSV path")
    e.add_argument("--epochs", help="epoch range lo:hi (hi exclusive) to fit on")
    e.add_argument("--n-processes", type=int, help="processes per arm for traces without an n_processes column")
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("replay", help="score policies offline on a recorded trace")
    common(r)
    r.add_argument("--dataset", help="trace CSV (overrides [replay] dataset)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--threads", type=int, default=1, help="accepted for symmetry; replay runs serially")
    r.set_defaults(func=cmd_replay)

    g = sub.add_parser("gen-synthetic", help="write the synthetic 96-arm trace")
    common(g)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen_synthetic)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OracleFailure as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (RmpmabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
