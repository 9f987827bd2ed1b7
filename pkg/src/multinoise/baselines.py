"""Single-trajectory baselines: recursive least squares for the nominal
system and for the lifted second-moment regression, plus periodic-input
trajectory generation so sample counts match the multi-rollout estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rngstream as rs
from .moment_oracle import lift_nominal
from .shape_ops import selection_matrices, svec_dim

__all__ = [
    "RlsState",
    "rls_nominal",
    "rls_second_moment",
    "second_moment_regressors",
    "GaussianInputLaw",
    "PeriodicInputLaw",
    "make_periodic_schedule",
    "simulate_single_trajectories",
]

#: Diffuse-prior initialization for the information matrix, P0 = INIT_COV * I.
INIT_COV = 1e6

#: Any |entry| beyond this freezes the recursion and sets the divergence flag.
DIVERGENCE_LIMIT = 1e12


@dataclass
class RlsState:
    """Final recursion state of one RLS run."""

    theta: np.ndarray
    P: np.ndarray
    steps: int
    diverged: bool


def _too_big(a, axis):
    finite = np.where(np.isfinite(a), a, np.inf)
    return ~np.isfinite(a).all(axis=axis) | (np.max(np.abs(finite), axis=axis) > DIVERGENCE_LIMIT)


def _rls_batch(phi, target, checkpoints):
    """Unit-forgetting RLS over batched trajectories, frozen on divergence.

    phi: (R, T, d) regressors, target: (R, T, p) responses.  Returns
    (estimates at checkpoints: (len(cp), R, p, d), diverged: (R,), states, cps).
    A run freezes once its regressor, response or updated estimate leaves the
    finite range (|entry| > DIVERGENCE_LIMIT): the estimate rolls back to the
    last valid value and the divergence flag persists.
    """
    R, T, d = phi.shape
    p = target.shape[2]
    theta = np.zeros((R, p, d))
    P = np.tile(INIT_COV * np.eye(d), (R, 1, 1))
    alive = np.ones(R, dtype=bool)
    freeze_step = np.full(R, T + 1, dtype=int)  # 1-based step of first freeze
    cps = sorted(set(int(c) for c in checkpoints))
    if any(c < 1 or c > T for c in cps):
        raise ValueError(f"checkpoints must lie in 1..{T}")
    out = np.empty((len(cps), R, p, d))
    nxt = 0
    for t in range(T):
        bad = _too_big(phi[:, t, :], 1) | _too_big(target[:, t, :], 1)
        freeze_step[alive & bad] = t + 1
        alive &= ~bad
        ph = np.where(alive[:, None], phi[:, t, :], 0.0)
        y = np.where(alive[:, None], target[:, t, :], 0.0)
        Pph = np.einsum("rij,rj->ri", P, ph)
        denom = 1.0 + np.einsum("ri,ri->r", ph, Pph)
        gain = Pph / denom[:, None]
        resid = y - np.einsum("rpd,rd->rp", theta, ph)
        theta_new = theta + np.einsum("rp,rd->rpd", resid, gain)
        P_new = P - np.einsum("ri,rj->rij", gain, Pph)
        P_new = 0.5 * (P_new + P_new.swapaxes(1, 2))
        blown = alive & (_too_big(theta_new, (1, 2)) | _too_big(P_new, (1, 2)))
        freeze_step[blown] = t + 1
        keep = (alive & ~blown)[:, None, None]
        theta = np.where(keep, theta_new, theta)
        P = np.where(keep, P_new, P)
        alive &= ~blown
        while nxt < len(cps) and cps[nxt] == t + 1:
            out[nxt] = theta
            nxt += 1
    states = [
        RlsState(theta=theta[r], P=P[r], steps=T, diverged=bool(~alive[r])) for r in range(R)
    ]
    return out, ~alive, states, cps, freeze_step


def rls_nominal(states, inputs, checkpoints=None):
    """RLS for [A B] on one trajectory: regressor (x_t, u_t), target x_{t+1}.

    Returns (estimates, diverged, final_state) where estimates is a list of
    (samples, [A_hat B_hat]) pairs at the requested sample counts
    (default: the full length only).
    """
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    T = inputs.shape[0]
    if checkpoints is None:
        checkpoints = [T]
    phi = np.concatenate([states[:-1], inputs], axis=1)[None]
    target = states[1:][None].copy()
    out, div, st, cps, _ = _rls_batch(phi, target, checkpoints)
    return [(c, out[i, 0]) for i, c in enumerate(cps)], bool(div[0]), st[0]


def second_moment_regressors(states, inputs):
    """Reduced quadratic regressors of the single-trajectory covariance dynamic.

    Per step: target P1 vec(x_{t+1} x_{t+1}'), regressor blocks
    [P1 vec(x x'); P2 vec(u u'); vec(x u'); vec(u x')].
    """
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    n = states.shape[-1]
    m = inputs.shape[-1]
    kept_n = selection_matrices(n).kept
    kept_m = selection_matrices(m).kept
    x0, x1, u = states[:-1], states[1:], inputs
    # einsum index order (j, i) then row-major reshape = column-stacking vec
    xx = np.einsum("ti,tj->tji", x0, x0).reshape(len(u), -1)[:, kept_n]
    uu = np.einsum("ti,tj->tji", u, u).reshape(len(u), -1)[:, kept_m]
    xu = np.einsum("ti,tj->tji", x0, u).reshape(len(u), -1)
    ux = np.einsum("ti,tj->tji", u, x0).reshape(len(u), -1)
    phi = np.concatenate([xx, uu, xu, ux], axis=1)
    target = np.einsum("ti,tj->tji", x1, x1).reshape(len(u), -1)[:, kept_n]
    return phi, target


def rls_second_moment(states, inputs, nominal_estimates, checkpoints=None):
    """RLS covariance estimation on one trajectory, coupled to nominal estimates.

    nominal_estimates: list of (samples, [A_hat B_hat]) at the same sample
    counts (from rls_nominal).  At every checkpoint the lifted nominal part
    P1 (A_hat kron A_hat) Q1 (resp. B) is subtracted from the fitted
    second-moment blocks to give (SigmaA_tilde', SigmaB_tilde') estimates.
    Returns (list of (samples, SA_tilde, SB_tilde), diverged, final_state).
    """
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    T = inputs.shape[0]
    if checkpoints is None:
        checkpoints = [T]
    phi, target = second_moment_regressors(states, inputs)
    out, div, st, cps, _ = _rls_batch(phi[None], target[None], checkpoints)
    nom = dict(nominal_estimates)
    n = states.shape[-1]
    nt, mt = svec_dim(n), svec_dim(inputs.shape[-1])
    results = []
    for i, c in enumerate(cps):
        theta = out[i, 0]
        if c not in nom:
            raise ValueError(f"no nominal estimate at sample count {c}")
        ab = nom[c]
        A_hat, B_hat = ab[:, :n], ab[:, n:]
        A_t, B_t, _, _ = lift_nominal(A_hat, B_hat)
        sa = theta[:, :nt] - A_t
        sb = theta[:, nt : nt + mt] - B_t
        results.append((c, sa, sb))
    return results, bool(div[0]), st[0]


class GaussianInputLaw:
    """i.i.d. standard normal inputs (the plain RLS baseline)."""

    def __init__(self, m):
        self.m = m

    def sample(self, seed, ks, t):
        return rs.unit_variance(seed, ks, t, rs.ROLE_INPUT, self.m, "gaussian")


class PeriodicInputLaw:
    """Inputs with mean nu_{t mod ell} and covariance Ubar_{t mod ell}.

    The law repeats with the schedule period; the draws do not (each step
    keys its own stream by the true time index).
    """

    def __init__(self, schedule):
        self.schedule = schedule
        self.m = schedule.m

    def sample(self, seed, ks, t):
        sched = self.schedule
        tt = t % sched.ell
        if sched.law == "deterministic":
            return np.tile(sched.nu[tt], (len(ks), 1))
        z = rs.unit_variance(seed, ks, t, rs.ROLE_INPUT, sched.m, sched.law)
        return sched.nu[tt] + z @ sched._factors[tt].T

    def mean(self, t):
        return self.schedule.nu[t % self.schedule.ell]


def make_periodic_schedule(schedule, T):
    """Per-step input law repeating the schedule with period ell; T >= ell."""
    if T < schedule.ell:
        raise ValueError("periodic horizon must be at least one period")
    return PeriodicInputLaw(schedule)


def simulate_single_trajectories(system, input_law, T, reps, seed):
    """reps independent length-T trajectories under a per-step input law.

    Unlike the multi-rollout simulator this records divergence instead of
    raising: a trajectory freezes at its last in-range state and
    diverged_at[r] is the first invalid step index (T + 1 if none).
    """
    n, m = system.n, system.m
    ks = np.arange(reps)
    states = np.zeros((reps, T + 1, n))
    inputs = np.zeros((reps, T, m))
    x = np.zeros((reps, n))
    alive = np.ones(reps, dtype=bool)
    diverged_at = np.full(reps, T + 1, dtype=int)
    for t in range(T):
        u = input_law.sample(seed, ks, t)
        Abar, Bbar = system.noise.sample(seed, ks, t, n, m)
        x_new = (
            np.einsum("kij,kj->ki", Abar, x)
            + x @ system.A.T
            + np.einsum("kij,kj->ki", Bbar, u)
            + u @ system.B.T
        )
        blown = alive & _too_big(x_new, 1)
        diverged_at[blown] = t + 1
        alive &= ~blown
        x = np.where(alive[:, None], x_new, x)
        inputs[:, t, :] = u
        states[:, t + 1, :] = x
    return states, inputs, diverged_at
