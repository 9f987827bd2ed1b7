"""Exact first/second-moment propagation and population regression matrices.

The reduced second-moment dynamic is

    Xt_{t+1} = (At + St'_A) Xt_t + (Bt + St'_B) Ut_t + K_BA W_t + K_AB W'_t

with Xt = svec(E{x x'}), Ut = svec(Ubar + nu nu'), W = vec(mu nu'),
W' = vec(nu mu'), and the lifted matrices built from (A, B) and the
vec-covariances through the selection matrices P, Q and the reshaping G.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .shape_ops import (
    reshape_G,
    selection_matrices,
    smat,
    svec,
    svec_dim,
    svec_index_pairs,
    vec,
)

__all__ = [
    "LiftedDynamics",
    "lift",
    "lift_nominal",
    "MomentTrajectory",
    "propagate_first",
    "propagate_second",
    "propagate_second_reduced",
    "RegressionMatrices",
    "assemble_population",
    "assemble_from_moments",
    "ExcitationReport",
    "check_excitation",
    "controllable",
]

#: Gram-matrix rank tolerance, relative to the largest eigenvalue.
RANK_TOL = 1e-10


@dataclass
class LiftedDynamics:
    """Reduced-coordinate matrices of the second-moment dynamic."""

    n: int
    m: int
    A_t: np.ndarray        # P1 (A kron A) Q1
    B_t: np.ndarray        # P1 (B kron B) Q2
    K_BA: np.ndarray       # P1 (B kron A)
    K_AB: np.ndarray       # P1 (A kron B)
    sigma_a_prime: np.ndarray        # G(SigmaA) = E{Abar kron Abar}
    sigma_b_prime: np.ndarray        # G(SigmaB) = E{Bbar kron Bbar}
    sigma_a_tilde: np.ndarray        # P1 sigma_a_prime Q1
    sigma_b_tilde: np.ndarray        # P1 sigma_b_prime Q2


def lift_nominal(A, B):
    """Lifted matrices that depend on (A, B) only (no covariances)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = A.shape[0], B.shape[1]
    P1 = selection_matrices(n).P
    Q1 = selection_matrices(n).Q
    Q2 = selection_matrices(m).Q
    return (
        P1 @ np.kron(A, A) @ Q1,
        P1 @ np.kron(B, B) @ Q2,
        P1 @ np.kron(B, A),
        P1 @ np.kron(A, B),
    )


def lift(system):
    """Full lifted dynamics of a MultNoiseSystem."""
    n, m = system.n, system.m
    A_t, B_t, K_BA, K_AB = lift_nominal(system.A, system.B)
    P1 = selection_matrices(n).P
    Q1 = selection_matrices(n).Q
    Q2 = selection_matrices(m).Q
    sap = reshape_G(system.sigma_a, n, n, n, n)
    sbp = reshape_G(system.sigma_b, n, m, n, m)
    return LiftedDynamics(
        n=n,
        m=m,
        A_t=A_t,
        B_t=B_t,
        K_BA=K_BA,
        K_AB=K_AB,
        sigma_a_prime=sap,
        sigma_b_prime=sbp,
        sigma_a_tilde=P1 @ sap @ Q1,
        sigma_b_tilde=P1 @ sbp @ Q2,
    )


@dataclass
class MomentTrajectory:
    """Exact or empirical moment sequences along a schedule."""

    mu: np.ndarray       # (ell + 1, n)
    x_t: np.ndarray      # (ell + 1, n(n+1)/2) reduced second moments
    w: np.ndarray        # (ell, n*m)  vec(mu nu')
    w_p: np.ndarray      # (ell, n*m)  vec(nu mu')
    u_t: np.ndarray      # (ell, m(m+1)/2) reduced input second moments
    nu: np.ndarray       # (ell, m) designed input means
    source: str = "exact"

    @property
    def ell(self):
        return self.mu.shape[0] - 1

    @property
    def n(self):
        return self.mu.shape[1]

    def write_csv(self, path):
        """Columns t, mu_1.., Xt_11, Xt_21, ... (reduced entries in svec order)."""
        n = self.n
        header = (
            ["t"]
            + [f"mu_{i}" for i in range(1, n + 1)]
            + [f"Xt_{i}{j}" for i, j in svec_index_pairs(n)]
        )
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t in range(self.ell + 1):
                row = [t] + [f"{v:.17g}" for v in self.mu[t]] + [f"{v:.17g}" for v in self.x_t[t]]
                w.writerow(row)


def propagate_first(A, B, schedule, mu0):
    """mu_{t+1} = A mu_t + B nu_t, t = 0..ell-1."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    mu = np.empty((schedule.ell + 1, A.shape[0]))
    mu[0] = np.asarray(mu0, dtype=float).ravel()
    for t in range(schedule.ell):
        mu[t + 1] = A @ mu[t] + B @ schedule.nu[t]
    return mu


def propagate_second(system, schedule, mu0, x_t0=None):
    """Exact moment trajectory from (mu0, svec(E{x0 x0'})).

    x_t0 defaults to svec(mu0 mu0') (deterministic start); smat(x_t0) - mu0 mu0'
    must be PSD.
    """
    ld = lift(system)
    n = system.n
    mu0 = np.asarray(mu0, dtype=float).ravel()
    if x_t0 is None:
        x_t0 = svec(np.outer(mu0, mu0))
    x_t0 = np.asarray(x_t0, dtype=float).ravel()
    cov0 = smat(x_t0, n) - np.outer(mu0, mu0)
    if np.min(np.linalg.eigvalsh(0.5 * (cov0 + cov0.T))) < -1e-9 * max(1.0, np.max(np.abs(cov0))):
        raise ValueError("initial second moment minus mu0 mu0' is not PSD")
    return _propagate_reduced(ld, schedule, mu0, x_t0, system.A, system.B)


def propagate_second_reduced(A, B, sigma_a_tilde, sigma_b_tilde, schedule, mu0, x_t0=None):
    """Propagate the reduced dynamic for explicitly given lifted covariances.

    Used to run the second-moment recursion under *estimated* quantities,
    where no full covariance pair is available.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = A.shape[0], B.shape[1]
    A_t, B_t, K_BA, K_AB = lift_nominal(A, B)
    ld = LiftedDynamics(
        n=n,
        m=m,
        A_t=A_t,
        B_t=B_t,
        K_BA=K_BA,
        K_AB=K_AB,
        sigma_a_prime=np.zeros((n * n, n * n)),
        sigma_b_prime=np.zeros((n * n, m * m)),
        sigma_a_tilde=np.asarray(sigma_a_tilde, dtype=float),
        sigma_b_tilde=np.asarray(sigma_b_tilde, dtype=float),
    )
    mu0 = np.asarray(mu0, dtype=float).ravel()
    if x_t0 is None:
        x_t0 = svec(np.outer(mu0, mu0))
    return _propagate_reduced(ld, schedule, mu0, np.asarray(x_t0, dtype=float).ravel(), A, B)


def _propagate_reduced(ld, schedule, mu0, x_t0, A, B):
    ell = schedule.ell
    n, m = ld.n, ld.m
    mu = np.empty((ell + 1, n))
    x_t = np.empty((ell + 1, svec_dim(n)))
    w = np.empty((ell, n * m))
    w_p = np.empty((ell, n * m))
    u_t = np.empty((ell, svec_dim(m)))
    mu[0], x_t[0] = mu0, x_t0
    At = ld.A_t + ld.sigma_a_tilde
    Bt = ld.B_t + ld.sigma_b_tilde
    for t in range(ell):
        nu = schedule.nu[t]
        w[t] = vec(np.outer(mu[t], nu))
        w_p[t] = vec(np.outer(nu, mu[t]))
        u_t[t] = svec(schedule.input_second_moment(t))
        x_t[t + 1] = At @ x_t[t] + Bt @ u_t[t] + ld.K_BA @ w[t] + ld.K_AB @ w_p[t]
        mu[t + 1] = A @ mu[t] + B @ nu
    return MomentTrajectory(
        mu=mu, x_t=x_t, w=w, w_p=w_p, u_t=u_t, nu=schedule.nu.copy(), source="exact"
    )


@dataclass
class RegressionMatrices:
    """Population least-squares data blocks Y, Z, C, D.

    Columns run backwards in time as in the estimator displays:
    Y = [mu_ell ... mu_1], Z stacks [mu_{ell-1} ... mu_0] over [nu_{ell-1} ... nu_0],
    C = [C_ell ... C_1], D stacks reduced state/input second moments likewise.
    """

    Y: np.ndarray
    Z: np.ndarray
    C: np.ndarray
    D: np.ndarray
    M1: np.ndarray   # [Xt_{ell-1} ... Xt_0]
    L1: np.ndarray   # [W_{ell-1} ... W_0]
    U: np.ndarray    # [Ut_{ell-1} ... Ut_0]


def assemble_population(system, schedule, mu0, x_t0=None):
    """Exact regression matrices; recovery identities hold when Grams invert."""
    ld = lift(system)
    tr = propagate_second(system, schedule, mu0, x_t0)
    return assemble_from_moments(ld, tr), tr


def assemble_from_moments(ld, tr):
    """Build Y, Z, C, D from a (exact or empirical) moment trajectory.

    Residual columns C_t are formed with the nominal lifted matrices in ``ld``;
    with exact moments and the true (A, B) they equal
    [sigma_a_tilde  sigma_b_tilde] @ D column-for-column.
    """
    ell = tr.ell
    Y = tr.mu[ell:0:-1].T                       # columns mu_ell .. mu_1
    Z = np.vstack([tr.mu[ell - 1 :: -1].T, tr.nu[::-1].T])
    pred = (
        tr.x_t[:-1] @ ld.A_t.T
        + tr.w @ ld.K_BA.T
        + tr.w_p @ ld.K_AB.T
        + tr.u_t @ ld.B_t.T
    )
    Cfwd = tr.x_t[1:] - pred  # row t = C_{t+1}
    C = Cfwd[::-1].T
    D = np.vstack([tr.x_t[:-1][::-1].T, tr.u_t[::-1].T])
    return RegressionMatrices(
        Y=Y,
        Z=Z,
        C=C,
        D=D,
        M1=tr.x_t[:-1][::-1].T,
        L1=tr.w[::-1].T,
        U=tr.u_t[::-1].T,
    )


@dataclass
class ExcitationReport:
    rank_z: int
    lambda_min_zz: float
    lambda_max_zz: float
    rank_d: int
    lambda_min_dd: float
    lambda_max_dd: float
    ell: int
    ell_needed_z: int
    ell_needed_d: int
    pass_z: bool
    pass_d: bool


def check_excitation(reg, n, m):
    """Numerical full-row-rank checks of Z Z' and D D' plus length thresholds."""
    ell = reg.Y.shape[1]
    zz = reg.Z @ reg.Z.T
    dd = reg.D @ reg.D.T
    wz = np.linalg.eigvalsh(0.5 * (zz + zz.T))
    wd = np.linalg.eigvalsh(0.5 * (dd + dd.T))
    tol_z = RANK_TOL * max(wz[-1], 0.0)
    tol_d = RANK_TOL * max(wd[-1], 0.0)
    ell_z = n + m
    ell_d = (n * (n + 1) + m * (m + 1)) // 2
    return ExcitationReport(
        rank_z=int(np.sum(wz > tol_z)),
        lambda_min_zz=float(wz[0]),
        lambda_max_zz=float(wz[-1]),
        rank_d=int(np.sum(wd > tol_d)),
        lambda_min_dd=float(wd[0]),
        lambda_max_dd=float(wd[-1]),
        ell=ell,
        ell_needed_z=ell_z,
        ell_needed_d=ell_d,
        pass_z=bool(ell >= ell_z and wz[0] > tol_z),
        pass_d=bool(ell >= ell_d and wd[0] > tol_d),
    )


def controllable(A, B, tol=RANK_TOL):
    """True iff [B AB ... A^{n-1}B] has full row rank n (relative tolerance)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    ctrb = np.hstack(blocks)
    s = np.linalg.svd(ctrb, compute_uv=False)
    return bool(s.size >= n and s[n - 1] > tol * s[0])
