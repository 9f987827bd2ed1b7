"""Config-driven experiment runners producing CSV data and JSON summaries.

Four experiments mirror the bundled benchmark study: estimation-error
convergence across rollout counts, tail frequencies of normalized errors,
the equivalence-class trajectory demo, and the single-trajectory baseline
comparison with matched sample counts.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rngstream as rs
from .baselines import (
    GaussianInputLaw,
    PeriodicInputLaw,
    _rls_batch,
    second_moment_regressors,
    simulate_single_trajectories,
)
from .bounds import bound_context, delta_AB, eta
from .identifiability import sigma_from_class
from .mals import mals
from .moment_oracle import (
    lift,
    lift_nominal,
    propagate_second,
    propagate_second_reduced,
)
from .presets import PRESET_NAMES, get_preset
from .shape_ops import svec_dim, svec_index_pairs
from .system_model import CovarianceNoise, InputSchedule, make_system

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "run_convergence",
    "run_tail_frequency",
    "run_equivalence_demo",
    "run_baseline_comparison",
    "read_csv_table",
]

_LAWS = ("gaussian", "uniform", "deterministic")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    """Mirrors the JSON config file accepted by the CLI."""

    preset: str = "paper-4.1"
    input_laws: tuple = ("gaussian", "uniform", "deterministic")
    noise_law: str = "uniform"
    n_r_grid: tuple = (100, 1000, 10000, 100000)
    baseline_grid: tuple = (100, 1000, 10000)
    tail_grid: tuple = (100, 200, 400, 800)
    reps: int = 50
    tail_reps: int = 500
    bound_reps: int = 200
    bound_n_r: int = 2000
    seed: int = 0
    out: str = "results"
    demo_periods: int = 3
    demo_n_r: int = 100000
    eps_grid: tuple = ()
    baseline_systems: tuple = (
        "paper-4.2-rho0.6-nonoise",
        "paper-4.2-rho0.6",
        "paper-4.2-rho0.8",
        "paper-4.2-rho1.0",
    )

    def __post_init__(self):
        if self.preset not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {self.preset!r}; known: {', '.join(PRESET_NAMES)}")
        for law in self.input_laws:
            if law not in _LAWS:
                raise ConfigError(f"unknown input law {law!r}")
        if self.noise_law not in ("uniform", "gaussian"):
            raise ConfigError(f"unknown noise law {self.noise_law!r}")
        for name, grid in (("n_r_grid", self.n_r_grid), ("baseline_grid", self.baseline_grid),
                           ("tail_grid", self.tail_grid)):
            g = list(grid)
            if not g or any(int(v) < 1 for v in g) or sorted(g) != g:
                raise ConfigError(f"{name} must be a nonempty ascending list of positive counts")
        if self.reps < 1 or self.tail_reps < 1 or self.bound_reps < 1:
            raise ConfigError("repetition counts must be positive")
        for sys_name in self.baseline_systems:
            if sys_name not in PRESET_NAMES:
                raise ConfigError(f"unknown baseline system {sys_name!r}")

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        coerced = dict(d)
        for key in ("input_laws", "n_r_grid", "baseline_grid", "tail_grid", "eps_grid",
                    "baseline_systems"):
            if key in coerced and coerced[key] is not None:
                coerced[key] = tuple(coerced[key])
        try:
            return cls(**coerced)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json_file(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


@dataclass
class ExperimentReport:
    """Tables (header + rows) plus a JSON-serializable summary."""

    name: str
    summary: dict
    tables: dict = field(default_factory=dict)

    def write(self, outdir):
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for tname, (header, rows) in self.tables.items():
            p = out / f"{tname}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                for row in rows:
                    w.writerow([_fmt(v) for v in row])
            paths.append(p)
        p = out / f"{self.name}_summary.json"
        with open(p, "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)
        paths.append(p)
        return paths


def read_csv_table(path):
    """Round-trip import of a report CSV: (header, rows-of-strings)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _rep_seed(master, index):
    """Derived 64-bit seed for repetition ``index`` (role tag 17)."""
    return int(rs.stream_keys(master, index, 0, 17))


def _slope(x_log10, y_log10):
    return float(np.polyfit(x_log10, y_log10, 1)[0])


# ---------------------------------------------------------------------------
# convergence (error-vs-rollouts curves)


def run_convergence(config):
    """Median/mean estimation errors across the rollout grid per input law."""
    t0 = time.perf_counter()
    bundle = get_preset(config.preset, noise_law=config.noise_law)
    raw_rows = []
    summary_rows = []
    summary = {"config": _config_dict(config), "laws": {}}
    counter = 0
    for law in config.input_laws:
        b = bundle.with_input_law(law)
        med = {"err_AB": [], "err_Sigma": []}
        for n_r in config.n_r_grid:
            errs = {"err_AB": [], "err_Sigma": [], "err_AB_norm": [], "err_Sigma_norm": []}
            for rep in range(config.reps):
                seed = _rep_seed(config.seed, counter)
                counter += 1
                res = mals(b.system, b.schedule, b.init, int(n_r), seed=seed)
                for key in errs:
                    errs[key].append(res.errors[key])
                raw_rows.append(
                    [law, n_r, rep, seed]
                    + [res.errors[k] for k in ("err_AB", "err_Sigma", "err_AB_norm", "err_Sigma_norm")]
                )
            summary_rows.append(
                [law, n_r]
                + [np.mean(errs[k]) for k in errs]
                + [np.median(errs[k]) for k in errs]
            )
            med["err_AB"].append(float(np.median(errs["err_AB"])))
            med["err_Sigma"].append(float(np.median(errs["err_Sigma"])))
        lg = np.log10(np.asarray(config.n_r_grid, dtype=float))
        law_summary = {}
        for key, series in med.items():
            law_summary[f"median_{key}"] = series
            law_summary[f"slope_{key}"] = _slope(lg, np.log10(series))
            law_summary[f"monotone_{key}"] = bool(
                all(a >= b2 for a, b2 in zip(series, series[1:]))
            )
        summary["laws"][law] = law_summary
    summary["runtime_s"] = time.perf_counter() - t0
    raw_header = ["law", "n_r", "rep", "seed", "err_AB", "err_Sigma", "err_AB_norm", "err_Sigma_norm"]
    sum_header = (
        ["law", "n_r"]
        + [f"mean_{k}" for k in ("err_AB", "err_Sigma", "err_AB_norm", "err_Sigma_norm")]
        + [f"median_{k}" for k in ("err_AB", "err_Sigma", "err_AB_norm", "err_Sigma_norm")]
    )
    return ExperimentReport(
        name="convergence",
        summary=summary,
        tables={
            "convergence_raw": (raw_header, raw_rows),
            "convergence_summary": (sum_header, summary_rows),
        },
    )


def _config_dict(config):
    d = asdict(config)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


# ---------------------------------------------------------------------------
# tail frequencies (exceedance-vs-rollouts), optional bound envelope


def run_tail_frequency(config, eps_list=None, with_bounds=False):
    """Relative frequencies of normalized errors exceeding fixed levels.

    Uses the first configured input law.  With ``with_bounds`` the population
    bound envelope (nominal and covariance tails) is evaluated on the same
    epsilon grid against *unnormalized* spectral errors.
    """
    t0 = time.perf_counter()
    law = config.input_laws[0] if config.input_laws else "uniform"
    bundle = get_preset(config.preset, noise_law=config.noise_law).with_input_law(law)
    grid = [int(v) for v in config.tail_grid]
    reps = int(config.tail_reps)
    errs = {
        "err_AB_norm": np.empty((len(grid), reps)),
        "err_Sigma_norm": np.empty((len(grid), reps)),
        "err_AB": np.empty((len(grid), reps)),
        "err_Sigma": np.empty((len(grid), reps)),
    }
    counter = 0
    for gi, n_r in enumerate(grid):
        for rep in range(reps):
            seed = _rep_seed(config.seed ^ 0xA5, counter)
            counter += 1
            res = mals(bundle.system, bundle.schedule, bundle.init, n_r, seed=seed)
            for key in errs:
                errs[key][gi, rep] = res.errors[key]
    freq_rows = []
    summary = {"config": _config_dict(config), "law": law, "metrics": {}}
    for key in ("err_AB_norm", "err_Sigma_norm"):
        eps_star = float(np.median(errs[key][0]))
        if eps_list is not None:
            eps_grid = np.asarray(eps_list, dtype=float)
        elif config.eps_grid:
            eps_grid = np.asarray(config.eps_grid, dtype=float)
        else:
            eps_grid = np.geomspace(0.25 * eps_star, 4.0 * eps_star, 10)
        if eps_star not in eps_grid:
            eps_grid = np.sort(np.append(eps_grid, eps_star))
        for eps in eps_grid:
            for gi, n_r in enumerate(grid):
                freq = float(np.mean(errs[key][gi] >= eps))
                freq_rows.append([key, n_r, eps, freq])
        star_freqs = [float(np.mean(errs[key][gi] >= eps_star)) for gi in range(len(grid))]
        pos = [(n_r, f) for n_r, f in zip(grid, star_freqs) if f > 0]
        slope = None
        if len(pos) >= 2:
            slope = float(np.polyfit([p[0] for p in pos], np.log([p[1] for p in pos]), 1)[0])
        summary["metrics"][key] = {
            "eps_star": eps_star,
            "frequencies_at_eps_star": star_freqs,
            "strictly_decreasing": bool(
                all(a > b for a, b in zip(star_freqs, star_freqs[1:]))
            ),
            "log_freq_slope_per_rollout": slope,
        }
    tables = {"tail_frequencies": (["metric", "n_r", "epsilon", "frequency"], freq_rows)}
    if with_bounds:
        tables["bound_envelope"] = _bound_envelope(config, bundle, errs, grid)
        summary["bound_envelope"] = {"columns": "see bound_envelope.csv"}
    summary["runtime_s"] = time.perf_counter() - t0
    return ExperimentReport(name="tail", summary=summary, tables=tables)


def _bound_envelope(config, bundle, errs, grid):
    """Observed exceedance vs min(1, bound) on a shared epsilon grid."""
    rows = []
    for gi, n_r in enumerate(grid):
        ctx = bound_context(bundle.system, bundle.schedule, bundle.init, n_r)
        for key, fn in (("err_AB", delta_AB), ("err_Sigma", eta)):
            base = float(np.median(errs[key][0]))
            for eps in np.geomspace(0.5 * base, 8.0 * base, 10):
                freq = float(np.mean(errs[key][gi] >= eps))
                bound_val = min(1.0, fn(ctx, float(eps)))
                rows.append([key, n_r, eps, freq, bound_val, int(freq <= bound_val)])
    return (["metric", "n_r", "epsilon", "frequency", "bound", "holds"], rows)


# ---------------------------------------------------------------------------
# equivalence-class trajectory demo


def run_equivalence_demo(config):
    """Reduced second-moment trajectories: true, equivalent, estimate-driven."""
    t0 = time.perf_counter()
    bundle = get_preset(config.preset, noise_law=config.noise_law)
    system = bundle.system
    if system.n != 2 or system.m != 1:
        raise ConfigError("the equivalence demo runs on the 2-state benchmark presets")
    ec = bundle.equivalence()
    # preferred member: class coordinate 1/40 (strictly positive for the
    # noisy benchmark); fall back to the base point when that member leaves
    # the PSD cone (e.g. for the zero-noise class, where the base is the
    # only member and all trajectories coincide)
    alpha = np.array([1.0 / 40.0])
    sa_alt, sb_alt, psd_a, psd_b = sigma_from_class(ec, alpha, np.zeros(0))
    if not (psd_a and psd_b):
        alpha = np.zeros(1)
        sa_alt, sb_alt, psd_a, psd_b = sigma_from_class(ec, alpha, np.zeros(0))
    alt = make_system(system.A, system.B, CovarianceNoise(sa_alt, sb_alt, law=config.noise_law))
    sched = _tile_schedule(bundle.schedule, config.demo_periods)
    mu0 = np.zeros(system.n)
    base_tr = propagate_second(system, sched, mu0)
    alt_tr = propagate_second(alt, sched, mu0)
    est = mals(system, bundle.schedule, bundle.init, int(config.demo_n_r),
               seed=_rep_seed(config.seed ^ 0x3C, 0))
    est_tr = propagate_second_reduced(
        est.A_hat, est.B_hat, est.sigma_a_tilde_hat, est.sigma_b_tilde_hat, sched, mu0
    )
    labels = [f"Xt_{i}{j}" for i, j in svec_index_pairs(system.n)]
    header = ["t"]
    for tag in ("base", "equiv", "estimate"):
        header += [f"{tag}_{lab}" for lab in labels]
    rows = []
    for t in range(sched.ell + 1):
        rows.append([t] + list(base_tr.x_t[t]) + list(alt_tr.x_t[t]) + list(est_tr.x_t[t]))
    max_diff = float(np.max(np.abs(base_tr.x_t - alt_tr.x_t)))
    scale = float(np.max(np.abs(base_tr.x_t)))
    est_rel = float(np.max(np.abs(base_tr.x_t - est_tr.x_t))) / max(scale, 1e-300)
    summary = {
        "config": _config_dict(config),
        "equivalent_member_psd": [bool(psd_a), bool(psd_b)],
        "max_abs_diff_base_vs_equiv": max_diff,
        "max_rel_diff_base_vs_estimate": est_rel,
        "estimation_errors": est.errors,
        "runtime_s": time.perf_counter() - t0,
    }
    return ExperimentReport(
        name="equivalence",
        summary=summary,
        tables={"equivalence_trajectories": (header, rows)},
    )


def _tile_schedule(schedule, periods):
    reps = max(1, int(periods))
    return InputSchedule(
        nu=np.tile(schedule.nu, (reps, 1)),
        ubar=np.tile(schedule.ubar, (reps, 1, 1)),
        law=schedule.law,
        seed=schedule.seed,
    )


# ---------------------------------------------------------------------------
# baseline comparison (matched sample counts)


def run_baseline_comparison(config):
    """MALS vs single-trajectory RLS/RLSp across the benchmark systems."""
    t0 = time.perf_counter()
    grid = [int(v) for v in config.baseline_grid]
    reps = int(config.reps)
    raw_rows = []
    curve_tables = {}
    summary = {"config": _config_dict(config), "systems": {}}
    for sys_idx, sys_name in enumerate(config.baseline_systems):
        bundle = get_preset(sys_name, noise_law=config.noise_law).with_input_law("gaussian")
        system = bundle.system
        ell = bundle.schedule.ell
        checkpoints = [ell * n_r for n_r in grid]
        ld = lift(system)
        truth_ab = np.hstack([system.A, system.B])
        truth_sig = np.hstack([ld.sigma_a_tilde, ld.sigma_b_tilde])
        sys_summary = {}
        per_alg = {}
        # --- MALS on n_r rollouts of length ell
        rows_m = []
        for gi, n_r in enumerate(grid):
            assert checkpoints[gi] == ell * n_r, "sample-count parity violated"
            for rep in range(reps):
                seed = _rep_seed(config.seed ^ 0x88, sys_idx * 1_000_000 + gi * 10_000 + rep)
                res = mals(system, bundle.schedule, bundle.init, n_r, seed=seed)
                rows_m.append((ell * n_r, rep, res.errors["err_AB"], res.errors["err_Sigma"], False))
        per_alg["MALS"] = rows_m
        # --- RLS (i.i.d. standard normal inputs) and RLSp (periodic schedule law)
        T = ell * grid[-1]
        for alg_idx, (alg, law) in enumerate(
            (
                ("RLS", GaussianInputLaw(system.m)),
                ("RLSp", PeriodicInputLaw(bundle.schedule)),
            )
        ):
            alg_seed = _rep_seed(config.seed ^ 0x77, sys_idx * 10 + alg_idx)
            rows = _run_rls_batch(system, law, T, reps, alg_seed, checkpoints, truth_ab, truth_sig)
            per_alg[alg] = rows
        for alg, rows in per_alg.items():
            for samples, rep, e_ab, e_sig, div in rows:
                raw_rows.append([sys_name, alg, samples, rep, e_ab, e_sig, div])
            curve = []
            alg_sum = {}
            for samples in [ell * n_r for n_r in grid]:
                sel = [r for r in rows if r[0] == samples]
                mean_ab = float(np.mean([r[2] for r in sel]))
                mean_sig = float(np.mean([r[3] for r in sel]))
                div_frac = float(np.mean([bool(r[4]) for r in sel]))
                curve.append([samples, mean_ab, mean_sig, div_frac])
                alg_sum[str(samples)] = {
                    "mean_err_AB": mean_ab,
                    "median_err_AB": float(np.median([r[2] for r in sel])),
                    "mean_err_Sigma": mean_sig,
                    "median_err_Sigma": float(np.median([r[3] for r in sel])),
                    "diverged_fraction": div_frac,
                }
            curve_tables[f"baseline_{sys_name}_{alg}"] = (
                ["samples", "err_AB", "err_Sigma", "diverged"],
                curve,
            )
            sys_summary[alg] = alg_sum
        summary["systems"][sys_name] = sys_summary
    summary["runtime_s"] = time.perf_counter() - t0
    tables = {
        "baseline_raw": (
            ["system", "algorithm", "samples", "rep", "err_AB", "err_Sigma", "diverged"],
            raw_rows,
        ),
        **curve_tables,
    }
    return ExperimentReport(name="baselines", summary=summary, tables=tables)


def _run_rls_batch(system, input_law, T, reps, seed, checkpoints, truth_ab, truth_sig):
    """Batched RLS (nominal + covariance) on reps single trajectories.

    Data past a trajectory's divergence point is invalidated so the recursion
    freezes there; a run counts as diverged at a checkpoint once either the
    trajectory or an RLS recursion froze at or before it.
    """
    n, m = system.n, system.m
    states, inputs, diverged_at = simulate_single_trajectories(system, input_law, T, reps, seed)
    phi_n = np.concatenate([states[:, :-1], inputs], axis=2)
    tgt_n = states[:, 1:].copy()
    _mask_after(phi_n, diverged_at)
    _mask_after(tgt_n, diverged_at)
    est_n, _, _, cps, freeze_n = _rls_batch(phi_n, tgt_n, checkpoints)
    phi2, tgt2 = _batched_second_moment(states, inputs)
    _mask_after(phi2, diverged_at)
    _mask_after(tgt2, diverged_at)
    est_2, _, _, _, freeze_2 = _rls_batch(phi2, tgt2, checkpoints)
    nt, mt = svec_dim(n), svec_dim(m)
    rows = []
    for ci, c in enumerate(cps):
        for r in range(reps):
            ab = est_n[ci, r]
            A_hat, B_hat = ab[:, :n], ab[:, n:]
            A_t, B_t, _, _ = lift_nominal(A_hat, B_hat)
            sa = est_2[ci, r][:, :nt] - A_t
            sb = est_2[ci, r][:, nt : nt + mt] - B_t
            e_ab = float(np.linalg.norm(ab - truth_ab, 2))
            e_sig = float(np.linalg.norm(np.hstack([sa, sb]) - truth_sig, 2))
            diverged = bool(min(diverged_at[r], freeze_n[r], freeze_2[r]) <= c)
            rows.append((c, r, e_ab, e_sig, diverged))
    return rows


def _mask_after(arr, diverged_at):
    """Invalidate regression data past each trajectory's divergence point."""
    for r, d in enumerate(diverged_at):
        if d < arr.shape[1]:
            arr[r, d:] = np.inf


def _batched_second_moment(states, inputs):
    phis, tgts = [], []
    for r in range(states.shape[0]):
        p, tg = second_moment_regressors(states[r], inputs[r])
        phis.append(p)
        tgts.append(tg)
    return np.stack(phis), np.stack(tgts)
