"""Command-line front end.

Subcommands: simulate, estimate, oracle, identifiability, bounds, and
experiment {convergence|tail|equivalence|baselines}.  Exit codes: 0 success,
2 configuration error, 3 assertion failure inside a run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bounds import bound_context, delta_family, eta_family
from .experiments import (
    ConfigError,
    ExperimentConfig,
    run_baseline_comparison,
    run_convergence,
    run_equivalence_demo,
    run_tail_frequency,
)
from .identifiability import classify_uniqueness
from .mals import mals
from .moment_oracle import assemble_population, check_excitation, controllable
from .presets import PRESET_NAMES, get_preset
from .system_model import RolloutSet, simulate_rollouts


def _add_common(parser):
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--reps", type=int, default=None, help="repetition count")
    parser.add_argument("--preset", type=str, default=None, help=f"one of {', '.join(PRESET_NAMES)}")


def _load_config(args, **overrides):
    if args.config:
        cfg = ExperimentConfig.from_json_file(args.config)
        d = cfg.__dict__.copy()
    else:
        d = ExperimentConfig().__dict__.copy()
    for key in ("seed", "out", "reps", "preset"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    d.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict({k: v for k, v in d.items()})


def _outdir(config):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    config = _load_config(args)
    bundle = get_preset(config.preset, noise_law=config.noise_law)
    n_r = args.n_r or config.n_r_grid[0]
    rollouts = simulate_rollouts(bundle.system, bundle.schedule, bundle.init, int(n_r), config.seed)
    out = _outdir(config) / "rollouts.json"
    out.write_text(rollouts.to_json())
    print(f"wrote {out} ({rollouts.n_r} rollouts, ell={rollouts.ell})")
    return 0


def cmd_estimate(args):
    config = _load_config(args)
    bundle = get_preset(config.preset, noise_law=config.noise_law)
    if args.rollouts:
        rollouts = RolloutSet.from_json(Path(args.rollouts).read_text())
        result = mals(rollouts, truth=bundle.system if args.preset else None)
    else:
        n_r = args.n_r or config.n_r_grid[0]
        result = mals(bundle.system, bundle.schedule, bundle.init, int(n_r), seed=config.seed)
    out = _outdir(config) / "estimation.json"
    out.write_text(result.to_json())
    print(f"wrote {out}")
    return 0


def cmd_oracle(args):
    config = _load_config(args)
    bundle = get_preset(config.preset, noise_law=config.noise_law)
    from .moment_oracle import propagate_second

    tr = propagate_second(bundle.system, bundle.schedule, np.zeros(bundle.system.n))
    out = _outdir(config) / "moments.csv"
    tr.write_csv(out)
    reg, _ = assemble_population(bundle.system, bundle.schedule, np.zeros(bundle.system.n))
    rep = check_excitation(reg, bundle.system.n, bundle.system.m)
    summary = {
        "controllable_nominal": controllable(bundle.system.A, bundle.system.B),
        "excitation": {
            "pass_Z": rep.pass_z,
            "pass_D": rep.pass_d,
            "lambda_min_ZZ": rep.lambda_min_zz,
            "lambda_min_DD": rep.lambda_min_dd,
        },
    }
    (_outdir(config) / "oracle_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"wrote {out}")
    return 0


def cmd_identifiability(args):
    config = _load_config(args)
    bundle = get_preset(config.preset, noise_law=config.noise_law)
    ec = bundle.equivalence()
    verdict = classify_uniqueness(
        bundle.system.n, bundle.system.m, bundle.system.sigma_a, bundle.system.sigma_b
    )
    out = _outdir(config) / "equivalence_class.json"
    out.write_text(ec.to_json())
    (_outdir(config) / "uniqueness.json").write_text(
        json.dumps(
            {"a_part": verdict.a_part, "b_part": verdict.b_part,
             "overall": verdict.overall, "reasons": verdict.reasons},
            indent=2,
        )
    )
    print(f"wrote {out}")
    return 0


def cmd_bounds(args):
    config = _load_config(args)
    bundle = get_preset(config.preset, noise_law="uniform")  # bound machinery needs a.s. bounds
    n_r = args.n_r or config.bound_n_r
    ctx = bound_context(bundle.system, bundle.schedule, bundle.init, int(n_r))
    eps_grid = np.asarray(config.eps_grid, dtype=float) if config.eps_grid else np.geomspace(0.05, 5.0, 10)
    import csv as _csv

    outdir = _outdir(config)
    with open(outdir / "delta_bounds.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["epsilon", "delta_Y", "delta_YZ", "delta_ZZ", "delta_AB"])
        for eps in eps_grid:
            fam = delta_family(ctx, float(eps))
            w.writerow([f"{v:.17g}" for v in
                        (eps, fam["delta_Y"], fam["delta_YZ"], fam["delta_ZZ"], fam["delta_AB"])])
    with open(outdir / "eta_bounds.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["epsilon", "eta_D", "eta_C", "eta_CD", "eta_DD", "eta"])
        for eps in eps_grid:
            fam = eta_family(ctx, float(eps))
            w.writerow([f"{v:.17g}" for v in
                        (eps, fam["eta_D"], fam["eta_C"], fam["eta_CD"], fam["eta_DD"], fam["eta"])])
    print(f"wrote {outdir}/delta_bounds.csv and {outdir}/eta_bounds.csv")
    return 0


_EXPERIMENTS = {
    "convergence": run_convergence,
    "tail": run_tail_frequency,
    "equivalence": run_equivalence_demo,
    "baselines": run_baseline_comparison,
}


def cmd_experiment(args):
    config = _load_config(args)
    runner = _EXPERIMENTS[args.which]
    report = runner(config)
    paths = report.write(_outdir(config))
    for p in paths:
        print(f"wrote {p}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="multinoise",
                                 description="multiplicative-noise system identification toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate rollouts to JSON")
    _add_common(p)
    p.add_argument("--n-r", type=int, default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("estimate", help="run the averaging least-squares estimator")
    _add_common(p)
    p.add_argument("--n-r", type=int, default=None)
    p.add_argument("--rollouts", type=str, default=None, help="ingest a rollout JSON file")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("oracle", help="exact moment propagation and excitation checks")
    _add_common(p)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("identifiability", help="export the covariance equivalence class")
    _add_common(p)
    p.set_defaults(fn=cmd_identifiability)

    p = sub.add_parser("bounds", help="evaluate the finite-sample bound curves")
    _add_common(p)
    p.add_argument("--n-r", type=int, default=None)
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("experiment", help="run a bundled experiment")
    p.add_argument("which", choices=sorted(_EXPERIMENTS))
    _add_common(p)
    p.set_defaults(fn=cmd_experiment)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
