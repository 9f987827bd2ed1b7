"""Equivalence class of noise covariances sharing one second-moment dynamic.

Coupled entry pairs E{Abar_ik Abar_jl} and E{Abar_il Abar_jk} (i<j, k<l)
enter the reduced dynamic only through their sum, so the class of full
covariances reproducing given reduced matrices is the affine family

    SigmaA(alpha) = F(Q1 SigmaA_tilde Q1' D_n + E_alpha),

intersected with the PSD cone; E_alpha is a sum of rank-one difference terms
that the reduction P1 (.) Q1 annihilates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .shape_ops import reshape_F, selection_matrices, svec_dim

__all__ = [
    "entry_map",
    "EntryMap",
    "off_pairs",
    "build_E_alpha",
    "build_E_beta",
    "EquivalenceClass",
    "equivalence_class",
    "sigma_from_class",
    "scan_psd_feasible",
    "UniquenessVerdict",
    "classify_uniqueness",
    "IndependenceConstraints",
    "recover_under_constraints",
    "project_psd",
]

#: Strict-positivity threshold: lambda_min > STRICT_TOL * lambda_max counts as > 0.
STRICT_TOL = 1e-8


def _reduced_pos(i, j, n):
    """1-based reduced index of the (i, j) pair, i <= j: (i-1)(n - i/2) + j."""
    return (i - 1) * n + j - i * (i - 1) // 2


@dataclass
class EntryMap:
    """Where a full-covariance moment lands in the reduced matrix.

    row/col are 1-based reduced coordinates; case is one of "variance"
    (coefficient 1, single term), "row-coupled" (coefficient 2, single term),
    "col-aligned" (coefficient 1, single term), "coupled-sum" (two terms).
    terms lists the contributing 1-based positions of SigmaA as
    ((k-1)n+i, (l-1)n+j) index pairs, with their coefficients.
    """

    row: int
    col: int
    case: str
    terms: list


def entry_map(i, j, k, l, n):
    """Reduced position and formula shape for the (i<=j, k<=l) moment block."""
    if not (1 <= i <= j <= n and 1 <= k <= l <= n):
        raise ValueError("entry_map needs 1 <= i <= j <= n and 1 <= k <= l <= n")
    row = _reduced_pos(i, j, n)
    col = _reduced_pos(k, l, n)
    p = lambda a, b: (b - 1) * n + a  # vec position of entry (a, b), 1-based
    if i == j and k == l:
        return EntryMap(row, col, "variance", [(1.0, (p(i, k), p(i, k)))])
    if i == j:  # k < l
        return EntryMap(row, col, "row-coupled", [(2.0, (p(i, k), p(i, l)))])
    if k == l:  # i < j
        return EntryMap(row, col, "col-aligned", [(1.0, (p(i, k), p(j, k)))])
    return EntryMap(
        row, col, "coupled-sum", [(1.0, (p(i, k), p(j, l))), (1.0, (p(i, l), p(j, k)))]
    )


def reduced_from_full(sigma, n, m=None):
    """Rebuild the reduced covariance entrywise from the moment formulas.

    Independent of the P/Q/G route; used as a cross-check oracle for lift().
    With m given, sigma is treated as a SigmaB (nm x nm) and the column pairs
    range over [m].
    """
    sigma = np.asarray(sigma, dtype=float)
    cols = m if m is not None else n
    out = np.zeros((svec_dim(n), svec_dim(cols)))
    for j in range(1, n + 1):
        for i in range(1, j + 1):
            for l in range(1, cols + 1):
                for k in range(1, l + 1):
                    em = _entry_map_rect(i, j, k, l, n, cols)
                    val = sum(c * sigma[a - 1, b - 1] for c, (a, b) in em.terms)
                    out[em.row - 1, em.col - 1] = val
    return out


def _entry_map_rect(i, j, k, l, n, m):
    """entry_map generalized to an n x m noise matrix (SigmaB case)."""
    row = _reduced_pos(i, j, n)
    col = _reduced_pos(k, l, m)
    p = lambda a, b: (b - 1) * n + a
    if i == j and k == l:
        return EntryMap(row, col, "variance", [(1.0, (p(i, k), p(i, k)))])
    if i == j:
        return EntryMap(row, col, "row-coupled", [(2.0, (p(i, k), p(i, l)))])
    if k == l:
        return EntryMap(row, col, "col-aligned", [(1.0, (p(i, k), p(j, k)))])
    return EntryMap(
        row, col, "coupled-sum", [(1.0, (p(i, k), p(j, l))), (1.0, (p(i, l), p(j, k)))]
    )


def off_pairs(n):
    """(i, j) with 1 <= i < j <= n in lexicographic order."""
    return [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]


def build_E_alpha(alpha, n):
    """Sum of alpha_{ij,kl} (e_{(i-1)n+j} - e_{(j-1)n+i})(e_{(k-1)n+l} - e_{(l-1)n+k})'.

    alpha is indexed by ((i,j) pair, (k,l) pair) in lexicographic order,
    flattened row-major; length n^2 (n-1)^2 / 4.  P1 E_alpha Q1 = 0 always.
    """
    pairs = off_pairs(n)
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.size != len(pairs) ** 2:
        raise ValueError(f"alpha must have length {len(pairs) ** 2}, got {alpha.size}")
    E = np.zeros((n * n, n * n))
    idx = 0
    for i, j in pairs:
        r_plus = (i - 1) * n + j - 1
        r_minus = (j - 1) * n + i - 1
        for k, l in pairs:
            a = alpha[idx]
            idx += 1
            if a == 0.0:
                continue
            c_plus = (k - 1) * n + l - 1
            c_minus = (l - 1) * n + k - 1
            E[r_plus, c_plus] += a
            E[r_plus, c_minus] -= a
            E[r_minus, c_plus] -= a
            E[r_minus, c_minus] += a
    return E


def build_E_beta(beta, n, m):
    """Analogue of build_E_alpha for the input-noise block; shape n^2 x m^2."""
    prs = off_pairs(n)
    pcs = off_pairs(m)
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != len(prs) * len(pcs):
        raise ValueError(f"beta must have length {len(prs) * len(pcs)}, got {beta.size}")
    E = np.zeros((n * n, m * m))
    idx = 0
    for i, j in prs:
        r_plus = (i - 1) * n + j - 1
        r_minus = (j - 1) * n + i - 1
        for p, q in pcs:
            b = beta[idx]
            idx += 1
            if b == 0.0:
                continue
            c_plus = (p - 1) * m + q - 1
            c_minus = (q - 1) * m + p - 1
            E[r_plus, c_plus] += b
            E[r_plus, c_minus] -= b
            E[r_minus, c_plus] -= b
            E[r_minus, c_minus] += b
    return E


@dataclass
class EquivalenceClass:
    """All PSD covariance pairs reproducing (sigma_a_tilde, sigma_b_tilde)."""

    n: int
    m: int
    sigma_a_tilde: np.ndarray
    sigma_b_tilde: np.ndarray

    @property
    def d_alpha(self):
        return self.n**2 * (self.n - 1) ** 2 // 4

    @property
    def d_beta(self):
        return self.n * self.m * (self.n - 1) * (self.m - 1) // 4

    def base_point(self):
        """(SigmaA(0), SigmaB(0)): the symmetric split of every coupled sum."""
        return self.sigma_pair(np.zeros(self.d_alpha), np.zeros(self.d_beta))

    def sigma_pair(self, alpha, beta):
        n, m = self.n, self.m
        smn = selection_matrices(n)
        smm = selection_matrices(m)
        inner_a = smn.Q @ self.sigma_a_tilde @ smn.Q.T @ smn.D + build_E_alpha(alpha, n)
        inner_b = smn.Q @ self.sigma_b_tilde @ smm.Q.T @ smm.D + build_E_beta(beta, n, m)
        return (
            reshape_F(inner_a, n, n, n, n),
            reshape_F(inner_b, n, m, n, m),
        )

    def to_json(self):
        base_a, base_b = self.base_point()
        return json.dumps(
            {
                "n": self.n,
                "m": self.m,
                "SigmaA_tilde": self.sigma_a_tilde.tolist(),
                "SigmaB_tilde": self.sigma_b_tilde.tolist(),
                "d_alpha": self.d_alpha,
                "d_beta": self.d_beta,
                "base_SigmaA": base_a.tolist(),
                "base_SigmaB": base_b.tolist(),
            }
        )


def equivalence_class(sigma_a_tilde, sigma_b_tilde, n, m):
    return EquivalenceClass(
        n=n,
        m=m,
        sigma_a_tilde=np.asarray(sigma_a_tilde, dtype=float),
        sigma_b_tilde=np.asarray(sigma_b_tilde, dtype=float),
    )


def _is_psd(S):
    S = 0.5 * (S + S.T)
    w = np.linalg.eigvalsh(S)
    scale = max(abs(w[0]), abs(w[-1]), 1e-300)
    return bool(w[0] >= -1e-10 * max(scale, 1.0))


def sigma_from_class(ec, alpha, beta):
    """Class member (SigmaA(alpha), SigmaB(beta)) with PSD membership flags."""
    sa, sb = ec.sigma_pair(alpha, beta)
    return sa, sb, _is_psd(sa), _is_psd(sb)


def scan_psd_feasible(ec, alphas):
    """Grid search over scalar A-class coordinates; returns the PSD-feasible ones.

    Only meaningful at desk scale (d_alpha = 1); estimated classes whose base
    point leaves the cone should be handled with project_psd instead.
    """
    if ec.d_alpha != 1:
        raise ValueError("scalar feasibility scan needs d_alpha = 1")
    beta = np.zeros(ec.d_beta)
    out = []
    for a in alphas:
        _, _, psd_a, _ = sigma_from_class(ec, np.array([float(a)]), beta)
        if psd_a:
            out.append(float(a))
    return out


@dataclass
class UniquenessVerdict:
    """How much of (SigmaA, SigmaB) the second-moment dynamic pins down."""

    a_part: str  # "Unique" | "InfinitelyMany" | "UndeterminedByProp2"
    b_part: str
    overall: str
    reasons: list


def classify_uniqueness(n, m, sigma_a, sigma_b):
    """Uniqueness of the equivalence class per the definiteness conditions."""
    sigma_a = np.asarray(sigma_a, dtype=float)
    sigma_b = np.asarray(sigma_b, dtype=float)
    reasons = []
    if n == 1:
        a_part = "Unique"
        reasons.append("n = 1: no coupled state pairs exist")
    else:
        wa = np.linalg.eigvalsh(0.5 * (sigma_a + sigma_a.T))
        if wa[0] > STRICT_TOL * max(wa[-1], 0.0) and wa[-1] > 0:
            a_part = "InfinitelyMany"
            reasons.append("n >= 2 and SigmaA strictly positive definite")
        else:
            a_part = "UndeterminedByProp2"
            reasons.append("n >= 2 but SigmaA not strictly positive definite")
    if m == 1:
        b_part = "Unique"
        reasons.append("m = 1: no coupled input pairs exist")
    else:
        wb = np.linalg.eigvalsh(0.5 * (sigma_b + sigma_b.T))
        if wb[0] > STRICT_TOL * max(wb[-1], 0.0) and wb[-1] > 0:
            b_part = "InfinitelyMany"
            reasons.append("m >= 2 and SigmaB strictly positive definite")
        else:
            b_part = "UndeterminedByProp2"
            reasons.append("m >= 2 but SigmaB not strictly positive definite")
    if a_part == "Unique" and b_part == "Unique":
        overall = "Unique"
    elif "InfinitelyMany" in (a_part, b_part):
        overall = "InfinitelyMany"
    else:
        overall = "UndeterminedByProp2"
    return UniquenessVerdict(a_part=a_part, b_part=b_part, overall=overall, reasons=reasons)


class IndependenceConstraints:
    """Per-pair linear constraints pinning the coupled entries.

    For every (i<j, k<l) the constraint is
    gamma * E{Abar_ik Abar_jl} + delta * E{Abar_il Abar_jk} = tau with
    gamma != delta.  The built-in preset "diagonal-independence"
    (gamma=1, delta=-1, tau=0) encodes mutually independent entries of Abar.
    """

    def __init__(self, n, gamma=1.0, delta=-1.0, tau=None):
        if gamma == delta:
            raise ValueError("constraints need gamma != delta for every pair")
        self.n = n
        pairs = off_pairs(n)
        self.gamma = float(gamma)
        self.delta = float(delta)
        if tau is None:
            self.tau = np.zeros((len(pairs), len(pairs)))
        else:
            self.tau = np.asarray(tau, dtype=float).reshape(len(pairs), len(pairs))

    @classmethod
    def preset(cls, name, n):
        if name == "diagonal-independence":
            return cls(n, gamma=1.0, delta=-1.0, tau=None)
        raise ValueError(f"unknown constraint preset {name!r}")


def recover_under_constraints(sigma_a_tilde, constraints):
    """Unique class member satisfying per-pair constraints on coupled entries.

    Solves, per (i<j, k<l), the 2x2 system {sum = reduced entry, constraint}
    and materializes the resulting SigmaA(alpha).  Returns (SigmaA, is_psd);
    a non-PSD result is reported, not raised.
    """
    sigma_a_tilde = np.asarray(sigma_a_tilde, dtype=float)
    nt = sigma_a_tilde.shape[0]
    n = int(round((np.sqrt(8 * nt + 1) - 1) / 2))
    if svec_dim(n) != nt or constraints.n != n:
        raise ValueError("reduced matrix size does not match the constraint dimension")
    ec = equivalence_class(sigma_a_tilde, np.zeros((nt, 1)), n, 1)
    pairs = off_pairs(n)
    alpha = np.zeros((len(pairs), len(pairs)))
    g, d = constraints.gamma, constraints.delta
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            s = sigma_a_tilde[_reduced_pos(i, j, n) - 1, _reduced_pos(k, l, n) - 1]
            tau = constraints.tau[a, b]
            u = (tau - d * s) / (g - d)  # E{Abar_ik Abar_jl}
            alpha[a, b] = u - 0.5 * s
    sa, _, psd_a, _ = sigma_from_class(ec, alpha.ravel(), np.zeros(0))
    return sa, psd_a


def project_psd(S):
    """Nearest (Frobenius) PSD matrix: symmetrize and clip eigenvalues at 0."""
    S = np.asarray(S, dtype=float)
    Ssym = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(Ssym)
    return (V * np.clip(w, 0.0, None)) @ V.T
