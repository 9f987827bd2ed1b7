"""Boundedness constants and the finite-sample probability-bound families.

The delta family bounds the nominal-estimate error tail and the eta family
the covariance-estimate error tail; both are explicit functions of the
population regression-matrix norms, the a.s. boundedness constants, the
number of rollouts and the deviation level.  They are union bounds: values
above 1 are meaningful (vacuous) and are clipped only at reporting time.

Probabilities are assembled in log space so large n_r cannot underflow
intermediate terms; covering-number prefactors like 9^(n+m) enter as
(n+m) log 9.  Arguments outside a formula's derivation range evaluate to
+inf (vacuous) rather than raising, except where noted.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SystemBoundConstants",
    "boundedness_constants",
    "constants_from_setup",
    "BoundContext",
    "bound_context",
    "delta_Y",
    "delta_YZ",
    "delta_0",
    "delta_1",
    "delta_2",
    "delta_m",
    "delta_ZZ",
    "delta_AB",
    "delta_family",
    "eta_D",
    "eta_L",
    "eta_A",
    "eta_B",
    "eta_AB",
    "eta_AM",
    "eta_KL",
    "eta_C",
    "eta_CD",
    "eta_0",
    "eta_m",
    "eta_DD",
    "eta",
    "eta_family",
    "ab_validity_limit",
    "sigma_validity_limit",
    "invert_bound",
    "epsilon_Y_closed_form",
]

_LOG9 = np.log(9.0)

#: Above this n+m the covering prefactors make every bound astronomically vacuous.
VACUOUS_DIMENSION = 20


@dataclass
class SystemBoundConstants:
    """Almost-sure bound inputs and the derived trajectory bounds.

    Inputs: c_x (initial state), c_u (input), c_abar/c_bbar (noise spectral
    norms), c_mu (initial-state deviation), c_dx (initial outer-product
    deviation), c_nu (input deviation), c_sap/c_sbp (Kronecker-square
    deviations), spectral norms of A, B and of the Kronecker-square means.

    Derived: c_a, c_b (noisy one-step gains), c_m (state norm), c_n (state
    deviation), c_w (state-input outer deviation), c_f (state outer-product
    deviation) and the c_fx/c_fu/c_fxu increments feeding c_f.
    """

    ell: int
    c_x: float
    c_u: float
    c_abar: float
    c_bbar: float
    c_mu: float
    c_dx: float
    c_nu: float
    c_sap: float
    c_sbp: float
    norm_a: float
    norm_b: float
    norm_sap: float
    norm_sbp: float
    c_a: float = 0.0
    c_b: float = 0.0
    c_m: float = 0.0
    c_n: float = 0.0
    c_w: float = 0.0
    c_fx: float = 0.0
    c_fu: float = 0.0
    c_fxu: float = 0.0
    c_f: float = 0.0


def boundedness_constants(consts):
    """Fill in the derived boundedness constants (maxima over t = 0..ell)."""
    c = consts
    for name in ("c_x", "c_u", "c_abar", "c_bbar", "c_mu", "c_dx", "c_nu", "c_sap", "c_sbp"):
        if getattr(c, name) < 0:
            raise ValueError(f"{name} must be nonnegative")
    c_a = c.norm_a + c.c_abar
    c_b = c.norm_b + c.c_bbar
    c_m = _geom_max(c_a, c.c_x, c_b * c.c_u, c.ell)
    drive_n = c.norm_b * c.c_nu + c.c_abar * c_m + c.c_bbar * c.c_u
    c_n = _geom_max(c.norm_a, c.c_mu, drive_n, c.ell)
    c_w = c_n * c.c_u + c_m * c.c_nu
    c_fx = (2.0 * c.norm_a * c.c_abar + c.c_sap) * c_m**2
    c_fu = 3.0 * (c.norm_b**2 + c.norm_sbp) * c.c_u * c.c_nu + (2.0 * c.norm_b * c.c_bbar + c.c_sbp) * c.c_u**2
    c_fxu = (
        2.0 * c.norm_a * c.norm_b * c_w
        + (2.0 * c.norm_a * c.c_bbar + 2.0 * c.norm_b * c.c_abar + 2.0 * c.c_abar * c.c_bbar) * c_m * c.c_u
    )
    rate_f = c.norm_a**2 + c.norm_sap
    c_f = _geom_max(rate_f, c.c_dx, c_fx + c_fu + c_fxu, c.ell)
    return replace(
        c, c_a=c_a, c_b=c_b, c_m=c_m, c_n=c_n, c_w=c_w, c_fx=c_fx, c_fu=c_fu, c_fxu=c_fxu, c_f=c_f
    )


def _geom_max(rate, start, drive, ell):
    """max over 0 <= t <= ell of rate^t * start + sum_{i<t} rate^i * drive."""
    best = start  # t = 0 term (empty sum)
    val = start
    for _ in range(ell):
        val = rate * val + drive
        best = max(best, val)
    return float(best)


def constants_from_setup(system, schedule, init):
    """A.s. bound constants read off a bounded-law system/schedule/init."""
    from .moment_oracle import lift

    system.require_bounded()
    c_u, c_nu = schedule.deviation_bounds()
    if c_u is None:
        raise ValueError("input schedule uses an unbounded (gaussian) law")
    c_x, c_mu, c_dx = init.bounds()
    ld = lift(system)
    norm_sap = float(np.linalg.norm(ld.sigma_a_prime, 2))
    norm_sbp = float(np.linalg.norm(ld.sigma_b_prime, 2))
    raw = SystemBoundConstants(
        ell=schedule.ell,
        c_x=c_x,
        c_u=c_u,
        c_abar=system.c_abar,
        c_bbar=system.c_bbar,
        c_mu=c_mu,
        c_dx=c_dx,
        c_nu=c_nu,
        c_sap=system.c_abar**2 + norm_sap,
        c_sbp=system.c_bbar**2 + norm_sbp,
        norm_a=float(np.linalg.norm(system.A, 2)),
        norm_b=float(np.linalg.norm(system.B, 2)),
        norm_sap=norm_sap,
        norm_sbp=norm_sbp,
    )
    return boundedness_constants(raw)


@dataclass
class BoundContext:
    """Population quantities entering the bound formulas."""

    n: int
    m: int
    ell: int
    n_r: int
    eps_max: float
    lam_min_zz: float
    lam_max_zz: float
    lam_min_dd: float
    lam_max_dd: float
    norm_Y: float
    norm_Z: float
    norm_C: float
    norm_D: float
    norm_A: float
    norm_B: float
    norm_M1: float
    norm_L1: float
    norm_U: float
    c_n: float
    c_f: float
    c_w: float

    def __post_init__(self):
        if not (0 < self.eps_max <= 1.0):
            raise ValueError("eps_max must lie in (0, 1]")
        if self.n + self.m > VACUOUS_DIMENSION:
            warnings.warn(
                f"n + m = {self.n + self.m} > {VACUOUS_DIMENSION}: covering prefactors "
                "make every bound vacuous",
                RuntimeWarning,
                stacklevel=2,
            )

    def with_rollouts(self, n_r):
        return replace(self, n_r=n_r)


def bound_context(system, schedule, init, n_r, eps_max=1.0):
    """Assemble a BoundContext from population moments and boundedness constants."""
    from .moment_oracle import assemble_population, check_excitation

    consts = constants_from_setup(system, schedule, init)
    reg, _ = assemble_population(system, schedule, init.mean, None if _fixed(init) else _svec_sm(init))
    rep = check_excitation(reg, system.n, system.m)
    return BoundContext(
        n=system.n,
        m=system.m,
        ell=schedule.ell,
        n_r=n_r,
        eps_max=eps_max,
        lam_min_zz=rep.lambda_min_zz,
        lam_max_zz=rep.lambda_max_zz,
        lam_min_dd=rep.lambda_min_dd,
        lam_max_dd=rep.lambda_max_dd,
        norm_Y=float(np.linalg.norm(reg.Y, 2)),
        norm_Z=float(np.linalg.norm(reg.Z, 2)),
        norm_C=float(np.linalg.norm(reg.C, 2)),
        norm_D=float(np.linalg.norm(reg.D, 2)),
        norm_A=float(np.linalg.norm(system.A, 2)),
        norm_B=float(np.linalg.norm(system.B, 2)),
        norm_M1=float(np.linalg.norm(reg.M1, 2)),
        norm_L1=float(np.linalg.norm(reg.L1, 2)),
        norm_U=float(np.linalg.norm(reg.U, 2)),
        c_n=consts.c_n,
        c_f=consts.c_f,
        c_w=consts.c_w,
    )


def _fixed(init):
    return getattr(init, "variant", "") == "Fixed"


def _svec_sm(init):
    from .shape_ops import svec

    return svec(init.second_moment)


# ---------------------------------------------------------------------------
# log-space Bernstein core


def _log_bernstein(pref_log, n_r, c2ell, eps):
    """log of pref * exp(-1.5 n_r eps^2 / (3 c2ell + eps sqrt(c2ell))).

    c2ell = ell * c^2 with c the per-sample a.s. bound.  Returns -inf when the
    noise constant vanishes (the averaged quantity is exact) and +inf for
    nonpositive eps (outside the derivation range: vacuous).
    """
    if eps <= 0:
        return np.inf
    if c2ell <= 0.0:
        return -np.inf
    denom = 3.0 * c2ell + eps * np.sqrt(c2ell)
    return pref_log - 1.5 * n_r * eps * eps / denom


def _logsumexp(vals):
    vals = np.asarray(vals, dtype=float)
    if np.any(np.isposinf(vals)):
        return np.inf
    hi = np.max(vals)
    if hi == -np.inf:
        return -np.inf
    return hi + np.log(np.sum(np.exp(vals - hi)))


# ---------------------------------------------------------------------------
# delta family (nominal-estimate tail bounds)


def _log_delta_Y(ctx, eps):
    return _log_bernstein(np.log(ctx.n + ctx.ell), ctx.n_r, ctx.ell * ctx.c_n**2, eps)


def _log_delta_YZ(ctx, eps):
    if eps <= 0:
        return np.inf
    s = 0.5 * (ctx.norm_Y + ctx.norm_Z)
    return _log_delta_Y(ctx, np.sqrt(eps + s * s) - s)


def _log_delta_0(ctx, eps):
    if eps <= 0:
        return np.inf
    lam = ctx.lam_max_zz
    return _log_delta_Y(ctx, np.sqrt(lam + eps) - np.sqrt(lam))


def _log_delta_1(ctx, eps):
    return (ctx.n + ctx.m) * _LOG9 + _log_delta_0(ctx, eps)


def _log_delta_2(ctx, eps):
    ratio = 16.0 * ctx.lam_max_zz / ctx.lam_min_zz + 1.0
    return (ctx.n + ctx.m) * np.log(ratio) + _log_delta_0(ctx, eps)


def _log_delta_m(ctx, eps):
    return _logsumexp([_log_delta_1(ctx, eps), _log_delta_2(ctx, eps)])


def _log_delta_ZZ(ctx, eps):
    # vacuous (inf) outside 0 < eps < eps_max; strictness enforced by delta_ZZ
    if eps <= 0 or eps >= ctx.eps_max:
        return np.inf
    lam_min, lam_max = ctx.lam_min_zz, ctx.lam_max_zz
    first = _log_delta_0(ctx, 0.5 * lam_min**2 * (1.0 - eps / ctx.eps_max) * eps)
    second = _log_delta_m(ctx, eps * lam_min / (ctx.eps_max * (2.0 + lam_min / lam_max)))
    return _logsumexp([first, second])


def _log_delta_AB(ctx, eps):
    if eps <= 0:
        return np.inf
    lam_min = ctx.lam_min_zz
    scale = 3.0 * np.sqrt(ctx.norm_Y**2 * ctx.norm_Z**2)  # 3 sqrt(lam_max_YY lam_max_ZZ)
    return _logsumexp(
        [
            _log_delta_YZ(ctx, lam_min * eps / 3.0),
            _log_delta_YZ(ctx, np.sqrt(eps / 3.0)),
            _log_delta_ZZ(ctx, eps / scale),
            _log_delta_ZZ(ctx, np.sqrt(eps / 3.0)),
        ]
    )


def delta_Y(ctx, eps):
    """Averaged-moment deviation bound for Y_hat - Y (and Z_hat - Z)."""
    return float(np.exp(_log_delta_Y(ctx, eps)))


def delta_YZ(ctx, eps):
    return float(np.exp(_log_delta_YZ(ctx, eps)))


def delta_0(ctx, eps):
    return float(np.exp(_log_delta_0(ctx, eps)))


def delta_1(ctx, eps):
    return float(np.exp(_log_delta_1(ctx, eps)))


def delta_2(ctx, eps):
    return float(np.exp(_log_delta_2(ctx, eps)))


def delta_m(ctx, eps):
    return float(np.exp(_log_delta_m(ctx, eps)))


def delta_ZZ(ctx, eps, strict=True):
    """Gram-inverse deviation bound; needs 0 < eps < eps_max."""
    if strict and not (0 < eps < ctx.eps_max):
        raise ValueError(f"delta_ZZ needs 0 < eps < eps_max = {ctx.eps_max}")
    return float(np.exp(_log_delta_ZZ(ctx, eps)))


def delta_AB(ctx, eps):
    """Spectral-error tail bound for [A_hat B_hat]; vacuous (+inf -> clip to 1)
    outside its stated range (see ab_validity_limit)."""
    return float(np.exp(_log_delta_AB(ctx, eps)))


def ab_validity_limit(ctx):
    """Upper end of the derivation range for delta_AB."""
    return 3.0 * ctx.eps_max * min(ctx.norm_Y * ctx.norm_Z, ctx.eps_max)


def delta_family(ctx, eps):
    """All delta bounds at one deviation level; values may exceed 1."""
    return {
        "delta_Y": delta_Y(ctx, eps),
        "delta_YZ": delta_YZ(ctx, eps),
        "delta_0": delta_0(ctx, eps),
        "delta_1": delta_1(ctx, eps),
        "delta_2": delta_2(ctx, eps),
        "delta_m": delta_m(ctx, eps),
        "delta_ZZ": delta_ZZ(ctx, eps, strict=False),
        "delta_AB": delta_AB(ctx, eps),
        "valid_AB": bool(0 < eps < ab_validity_limit(ctx)),
    }


# ---------------------------------------------------------------------------
# eta family (covariance-estimate tail bounds)


def _log_eta_D(ctx, eps):
    pref = np.log(ctx.n * (ctx.n + 1) / 2 + ctx.ell)
    return _log_bernstein(pref, ctx.n_r, ctx.ell * ctx.c_f**2, eps)


def _log_eta_L(ctx, eps):
    pref = np.log(ctx.n * ctx.m + ctx.ell)
    return _log_bernstein(pref, ctx.n_r, ctx.ell * ctx.c_w**2, eps)


def _log_eta_A(ctx, eps):
    if eps <= 0:
        return np.inf
    return _logsumexp(
        [
            _log_delta_AB(ctx, 0.5 * np.sqrt(eps)),
            _log_delta_AB(ctx, eps / (8.0 * np.sqrt(ctx.norm_A))),
        ]
    )


def _log_eta_B(ctx, eps):
    if eps <= 0:
        return np.inf
    return _logsumexp(
        [
            _log_delta_AB(ctx, 0.5 * np.sqrt(eps)),
            _log_delta_AB(ctx, eps / (8.0 * np.sqrt(ctx.norm_B))),
        ]
    )


def _log_eta_AB(ctx, eps):
    if eps <= 0:
        return np.inf
    root = _log_delta_AB(ctx, np.sqrt(eps / 3.0))
    return _logsumexp(
        [
            np.log(2.0) + root,
            _log_delta_AB(ctx, eps / (3.0 * np.sqrt(ctx.norm_B))),
            _log_delta_AB(ctx, eps / (3.0 * np.sqrt(ctx.norm_A))),
        ]
    )


def _log_eta_AM(ctx, eps):
    if eps <= 0:
        return np.inf
    return _logsumexp(
        [
            _log_eta_A(ctx, eps / (3.0 * ctx.norm_M1)),
            _log_eta_D(ctx, eps / (6.0 * ctx.norm_A**2)),
            _log_eta_A(ctx, np.sqrt(eps / 3.0)),
            _log_eta_D(ctx, np.sqrt(eps / 3.0)),
        ]
    )


def _log_eta_KL(ctx, eps):
    if eps <= 0:
        return np.inf
    return _logsumexp(
        [
            _log_eta_AB(ctx, eps / (3.0 * ctx.norm_L1)),
            _log_eta_L(ctx, eps / (3.0 * ctx.norm_A * ctx.norm_B)),
            _log_eta_AB(ctx, np.sqrt(eps / 3.0)),
            _log_eta_L(ctx, np.sqrt(eps / 3.0)),
        ]
    )


def _log_eta_C(ctx, eps):
    if eps <= 0:
        return np.inf
    return _logsumexp(
        [
            _log_eta_D(ctx, eps / 5.0),
            _log_eta_AM(ctx, eps / 5.0),
            np.log(2.0) + _log_eta_KL(ctx, eps / 5.0),
            _log_eta_B(ctx, eps / (5.0 * ctx.norm_U)),
        ]
    )


def _log_eta_CD(ctx, eps):
    if eps <= 0:
        return np.inf
    return _logsumexp(
        [
            _log_eta_C(ctx, np.sqrt(eps / 3.0)),
            _log_eta_D(ctx, np.sqrt(eps / 3.0)),
            _log_eta_C(ctx, eps / (3.0 * ctx.norm_D)),
            _log_eta_D(ctx, eps / (3.0 * ctx.norm_C)),
        ]
    )


def _log_eta_0(ctx, eps):
    if eps <= 0:
        return np.inf
    lam = ctx.lam_max_dd
    return _log_eta_D(ctx, np.sqrt(lam + eps) - np.sqrt(lam))


def _log_eta_m(ctx, eps):
    dd = (ctx.n * (ctx.n + 1) + ctx.m * (ctx.m + 1)) / 2.0
    ratio = 16.0 * ctx.lam_max_dd / ctx.lam_min_dd + 1.0
    return _logsumexp(
        [dd * _LOG9 + _log_eta_0(ctx, eps), dd * np.log(ratio) + _log_eta_0(ctx, eps)]
    )


def _log_eta_DD(ctx, eps):
    if eps <= 0 or eps >= ctx.eps_max:
        return np.inf
    lam_min, lam_max = ctx.lam_min_dd, ctx.lam_max_dd
    first = _log_eta_0(ctx, 0.5 * lam_min**2 * (1.0 - eps / ctx.eps_max) * eps)
    second = _log_eta_m(ctx, eps * lam_min / (ctx.eps_max * (2.0 + lam_min / lam_max)))
    return _logsumexp([first, second])


def _log_eta(ctx, eps):
    # first term uses lambda_min(D D'): the regressor Gram, as in the proof
    if eps <= 0:
        return np.inf
    scale = 3.0 * ctx.norm_C * ctx.norm_D
    return _logsumexp(
        [
            _log_eta_CD(ctx, ctx.lam_min_dd * eps / 3.0),
            _log_eta_CD(ctx, np.sqrt(eps / 3.0)),
            _log_eta_DD(ctx, eps / scale),
            _log_eta_DD(ctx, np.sqrt(eps / 3.0)),
        ]
    )


def eta_D(ctx, eps):
    return float(np.exp(_log_eta_D(ctx, eps)))


def eta_L(ctx, eps):
    return float(np.exp(_log_eta_L(ctx, eps)))


def eta_A(ctx, eps):
    return float(np.exp(_log_eta_A(ctx, eps)))


def eta_B(ctx, eps):
    return float(np.exp(_log_eta_B(ctx, eps)))


def eta_AB(ctx, eps):
    return float(np.exp(_log_eta_AB(ctx, eps)))


def eta_AM(ctx, eps):
    return float(np.exp(_log_eta_AM(ctx, eps)))


def eta_KL(ctx, eps):
    return float(np.exp(_log_eta_KL(ctx, eps)))


def eta_C(ctx, eps):
    return float(np.exp(_log_eta_C(ctx, eps)))


def eta_CD(ctx, eps):
    return float(np.exp(_log_eta_CD(ctx, eps)))


def eta_0(ctx, eps):
    return float(np.exp(_log_eta_0(ctx, eps)))


def eta_m(ctx, eps):
    return float(np.exp(_log_eta_m(ctx, eps)))


def eta_DD(ctx, eps, strict=True):
    if strict and not (0 < eps < ctx.eps_max):
        raise ValueError(f"eta_DD needs 0 < eps < eps_max = {ctx.eps_max}")
    return float(np.exp(_log_eta_DD(ctx, eps)))


def eta(ctx, eps):
    """Spectral-error tail bound for the reduced-covariance estimate."""
    return float(np.exp(_log_eta(ctx, eps)))


def sigma_validity_limit(ctx):
    """Upper end of the derivation range for eta."""
    return 3.0 * ctx.eps_max * min(ctx.norm_C * ctx.norm_D, ctx.eps_max)


def eta_family(ctx, eps):
    """All eta bounds at one deviation level; values may exceed 1."""
    return {
        "eta_D": eta_D(ctx, eps),
        "eta_L": eta_L(ctx, eps),
        "eta_A": eta_A(ctx, eps),
        "eta_B": eta_B(ctx, eps),
        "eta_AB": eta_AB(ctx, eps),
        "eta_AM": eta_AM(ctx, eps),
        "eta_KL": eta_KL(ctx, eps),
        "eta_C": eta_C(ctx, eps),
        "eta_CD": eta_CD(ctx, eps),
        "eta_0": eta_0(ctx, eps),
        "eta_m": eta_m(ctx, eps),
        "eta_DD": eta_DD(ctx, eps, strict=False),
        "eta": eta(ctx, eps),
        "valid_sigma": bool(0 < eps < sigma_validity_limit(ctx)),
    }


# ---------------------------------------------------------------------------
# inversion


def epsilon_Y_closed_form(ctx, delta):
    """Quadratic-formula root of delta_Y(eps) = delta (the positive branch)."""
    if not (0 < delta < ctx.n + ctx.ell):
        raise ValueError("delta outside the achievable range of delta_Y")
    lc2 = ctx.ell * ctx.c_n**2
    L = np.log((ctx.n + ctx.ell) / delta)
    root = np.sqrt(lc2)
    return float(
        root * L / (3.0 * ctx.n_r) + np.sqrt(lc2 * L * L / (9.0 * ctx.n_r**2) + 2.0 * lc2 * L / ctx.n_r)
    )


def invert_bound(fn, delta, hi=None, lo=0.0, rel_tol=1e-10, max_iter=400):
    """Solve fn(eps) = delta by bisection; fn monotone decreasing.

    ``hi`` caps the search at the end of the bound's validity interval; when
    omitted the interval is grown by doubling until fn drops below delta.
    """
    if delta <= 0:
        raise ValueError("target delta must be positive")
    if hi is None:
        hi = 1.0
        for _ in range(200):
            if fn(hi) < delta:
                break
            hi *= 2.0
        else:
            raise ValueError("bound does not reach delta on any bounded interval")
    else:
        f_hi = fn(hi * (1 - 1e-12))
        if f_hi > delta:
            raise ValueError("delta below the bound's reachable values on this interval")
    a, b = lo, hi
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        val = fn(mid)
        if abs(val - delta) <= rel_tol * delta:
            return mid
        if val > delta:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)
