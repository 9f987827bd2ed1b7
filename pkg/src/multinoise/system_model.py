"""Multiplicative-noise linear systems and independent-rollout simulation.

The plant is x_{t+1} = (A + Abar_t) x_t + (B + Bbar_t) u_t with i.i.d.
zero-mean matrix noise (Abar_t, Bbar_t) independent of the inputs.  Noise is
described by vec-covariances SigmaA = E{vec(Abar) vec(Abar)'} (n^2 x n^2) and
SigmaB likewise (nm x nm).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import rngstream as rs
from .shape_ops import vec

__all__ = [
    "ZeroNoise",
    "CovarianceNoise",
    "EigenStructuredNoise",
    "FixedInitial",
    "UniformBoxInitial",
    "TruncatedGaussianInitial",
    "InputSchedule",
    "MultNoiseSystem",
    "make_system",
    "embed_additive_noise",
    "augment_schedule",
    "Rollout",
    "RolloutSet",
    "simulate_rollouts",
    "SimulationDiverged",
]

#: Allowed negative slack on covariance eigenvalues before declaring non-PSD.
PSD_SLACK = 1e-10

#: State magnitude beyond which a simulation is declared diverged.
DIVERGENCE_LIMIT = 1e12

_SQRT3 = np.sqrt(3.0)


class SimulationDiverged(RuntimeError):
    """A state entry exceeded DIVERGENCE_LIMIT during simulation."""


def _psd_factor(S, name):
    """Return L with L L' = S for symmetric PSD S (eigenvalue clipping).

    Eigenvalues below -PSD_SLACK * scale are an error; small negatives are
    clipped to zero (empirical covariances carry rounding noise).
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"{name} must be square, got {S.shape}")
    Ssym = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(Ssym)
    scale = max(abs(w[0]), abs(w[-1]), 1.0)
    if w[0] < -PSD_SLACK * scale:
        raise ValueError(f"{name} is not positive semidefinite (min eig {w[0]:.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


class ZeroNoise:
    """No multiplicative noise."""

    kind = "Zero"
    law = "uniform"

    def implied_sigma_a(self, n):
        return np.zeros((n * n, n * n))

    def implied_sigma_b(self, n, m):
        return np.zeros((n * m, n * m))

    def bounds(self, n, m):
        return 0.0, 0.0

    def sample(self, seed, ks, t, n, m):
        R = len(ks)
        return np.zeros((R, n, n)), np.zeros((R, n, m))


class CovarianceNoise:
    """Noise specified by full vec-covariances (SigmaA, SigmaB).

    vec(Abar) = L_A z with L_A L_A' = SigmaA and z i.i.d. zero-mean
    unit-variance components; law "uniform" (bounded a.s.) by default,
    "gaussian" optionally (then no a.s. bound exists).
    """

    kind = "EntrywiseBounded"

    def __init__(self, sigma_a, sigma_b, law="uniform"):
        if law not in ("uniform", "gaussian"):
            raise ValueError(f"unknown noise law {law!r}")
        self.sigma_a = np.asarray(sigma_a, dtype=float)
        self.sigma_b = np.asarray(sigma_b, dtype=float)
        self.law = law
        self._LA = _psd_factor(self.sigma_a, "SigmaA")
        self._LB = _psd_factor(self.sigma_b, "SigmaB")

    def implied_sigma_a(self, n):
        if self.sigma_a.shape != (n * n, n * n):
            raise ValueError(f"SigmaA shape {self.sigma_a.shape} != {(n * n, n * n)}")
        return self.sigma_a

    def implied_sigma_b(self, n, m):
        if self.sigma_b.shape != (n * m, n * m):
            raise ValueError(f"SigmaB shape {self.sigma_b.shape} != {(n * m, n * m)}")
        return self.sigma_b

    def bounds(self, n, m):
        """A.s. spectral-norm bounds (via ||.||_F <= ||L||_2 ||z||); None if unbounded."""
        if self.law != "uniform":
            return None, None
        ca = float(np.linalg.norm(self._LA, 2)) * _SQRT3 * np.sqrt(n * n)
        cb = float(np.linalg.norm(self._LB, 2)) * _SQRT3 * np.sqrt(n * m)
        return ca, cb

    def sample(self, seed, ks, t, n, m):
        za = rs.unit_variance(seed, ks, t, rs.ROLE_NOISE_A, n * n, self.law)
        zb = rs.unit_variance(seed, ks, t, rs.ROLE_NOISE_B, n * m, self.law)
        veca = za @ self._LA.T
        vecb = zb @ self._LB.T
        Abar = veca.reshape(len(ks), n, n).swapaxes(1, 2)  # undo column stacking
        Bbar = vecb.reshape(len(ks), m, n).swapaxes(1, 2)
        return Abar, Bbar


class EigenStructuredNoise:
    """Abar_t = sum_i A_i p_{i,t}, Bbar_t = sum_j B_j q_{j,t}.

    p_i, q_j are independent scalar zero-mean draws with variances sigma_i^2,
    delta_j^2; the implied covariances are rank-sum outer products of the
    vectorized directions.
    """

    kind = "EigenStructured"

    def __init__(self, a_dirs, sigmas, b_dirs, deltas, law="uniform"):
        if law not in ("uniform", "gaussian"):
            raise ValueError(f"unknown noise law {law!r}")
        self.a_dirs = [np.asarray(M, dtype=float) for M in a_dirs]
        self.b_dirs = [np.asarray(M, dtype=float) for M in b_dirs]
        self.sigmas = np.asarray(sigmas, dtype=float)
        self.deltas = np.asarray(deltas, dtype=float)
        if len(self.a_dirs) != self.sigmas.size or len(self.b_dirs) != self.deltas.size:
            raise ValueError("direction/variance counts do not match")
        self.law = law

    def implied_sigma_a(self, n):
        S = np.zeros((n * n, n * n))
        for M, s in zip(self.a_dirs, self.sigmas):
            v = vec(M)
            S += s * s * np.outer(v, v)
        return S

    def implied_sigma_b(self, n, m):
        S = np.zeros((n * m, n * m))
        for M, d in zip(self.b_dirs, self.deltas):
            v = vec(M)
            S += d * d * np.outer(v, v)
        return S

    def bounds(self, n, m):
        if self.law != "uniform":
            return None, None
        ca = _SQRT3 * sum(abs(s) * np.linalg.norm(M, 2) for M, s in zip(self.a_dirs, self.sigmas))
        cb = _SQRT3 * sum(abs(d) * np.linalg.norm(M, 2) for M, d in zip(self.b_dirs, self.deltas))
        return float(ca), float(cb)

    def sample(self, seed, ks, t, n, m):
        R = len(ks)
        r, s = len(self.a_dirs), len(self.b_dirs)
        Abar = np.zeros((R, n, n))
        if r:
            p = rs.unit_variance(seed, ks, t, rs.ROLE_NOISE_A, r, self.law) * self.sigmas
            Abar = np.einsum("kr,rij->kij", p, np.stack(self.a_dirs))
        Bbar = np.zeros((R, n, m))
        if s:
            q = rs.unit_variance(seed, ks, t, rs.ROLE_NOISE_B, s, self.law) * self.deltas
            Bbar = np.einsum("ks,sij->kij", q, np.stack(self.b_dirs))
        return Abar, Bbar


# ---------------------------------------------------------------------------
# initial-state distributions


class FixedInitial:
    """Deterministic initial state."""

    variant = "Fixed"

    def __init__(self, x0):
        self.x0 = np.asarray(x0, dtype=float).ravel()
        self.mean = self.x0
        self.second_moment = np.outer(self.x0, self.x0)

    def sample(self, seed, ks):
        return np.tile(self.x0, (len(ks), 1))

    def bounds(self):
        c_x = float(np.linalg.norm(self.x0))
        return c_x, 0.0, 0.0  # c_X, c_mu, c_DeltaX


class UniformBoxInitial:
    """Independent per-component uniform on [center - half, center + half]."""

    variant = "UniformBox"

    def __init__(self, center, half_width):
        self.center = np.asarray(center, dtype=float).ravel()
        self.half = np.asarray(half_width, dtype=float).ravel()
        if self.half.shape != self.center.shape or np.any(self.half < 0):
            raise ValueError("half_width must be nonnegative and match center")
        self.mean = self.center
        self.second_moment = np.outer(self.center, self.center) + np.diag(self.half**2 / 3.0)

    def sample(self, seed, ks):
        u = rs.uniform01(seed, ks, 0, rs.ROLE_X0, self.center.size)
        return self.center + (2.0 * u - 1.0) * self.half

    def bounds(self):
        c_x = float(np.linalg.norm(self.center) + np.linalg.norm(self.half))
        c_mu = float(np.linalg.norm(self.half))
        c_dx = c_x * c_x + float(np.linalg.norm(self.second_moment, "fro"))
        return c_x, c_mu, c_dx


class TruncatedGaussianInitial:
    """x0 = mean + L z with z i.i.d. standard normal truncated to |z_i| <= radius.

    Componentwise truncation keeps the components independent, so the second
    moment stays closed-form: cov = L L' * var(truncnorm(radius)).
    """

    variant = "TruncatedGaussian"

    def __init__(self, mean, cov, radius=3.0):
        from scipy.stats import truncnorm

        self.mu = np.asarray(mean, dtype=float).ravel()
        self.cov = np.asarray(cov, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("truncation radius must be positive")
        self._L = _psd_factor(self.cov, "initial covariance")
        self._zvar = float(truncnorm.var(-self.radius, self.radius))
        self.mean = self.mu
        self.second_moment = np.outer(self.mu, self.mu) + self._L @ self._L.T * self._zvar

    def sample(self, seed, ks):
        z = rs.truncated_normal(seed, ks, 0, rs.ROLE_X0, self.mu.size, self.radius)
        return self.mu + z @ self._L.T

    def bounds(self):
        c_mu = float(np.linalg.norm(self._L, 2)) * self.radius * np.sqrt(self.mu.size)
        c_x = float(np.linalg.norm(self.mu)) + c_mu
        c_dx = c_x * c_x + float(np.linalg.norm(self.second_moment, "fro"))
        return c_x, c_mu, c_dx


# ---------------------------------------------------------------------------
# input schedules


@dataclass
class InputSchedule:
    """Designed per-step input moments: means nu_t and central covariances Ubar_t.

    law controls how u_t is drawn around (nu_t, Ubar_t): "uniform" (bounded),
    "gaussian", or "deterministic" (u_t = nu_t exactly; Ubar must be zero).
    """

    nu: np.ndarray          # (ell, m)
    ubar: np.ndarray        # (ell, m, m)
    law: str = "uniform"
    seed: int | None = None
    _factors: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.nu = np.atleast_2d(np.asarray(self.nu, dtype=float))
        self.ubar = np.asarray(self.ubar, dtype=float)
        if self.ubar.ndim == 2:  # single matrix -> broadcast
            self.ubar = np.repeat(self.ubar[None], self.nu.shape[0], axis=0)
        if self.law not in ("uniform", "gaussian", "deterministic"):
            raise ValueError(f"unknown input law {self.law!r}")
        if self.nu.shape[0] != self.ubar.shape[0] or self.ubar.shape[1:] != (self.m, self.m):
            raise ValueError("schedule shapes inconsistent")
        if self.law == "deterministic" and np.any(self.ubar != 0):
            raise ValueError("deterministic schedule requires zero input covariances")
        self._factors = [_psd_factor(U, f"Ubar[{t}]") for t, U in enumerate(self.ubar)]

    @property
    def ell(self):
        return self.nu.shape[0]

    @property
    def m(self):
        return self.nu.shape[1]

    def input_second_moment(self, t):
        """E{u_t u_t'} = Ubar_t + nu_t nu_t'."""
        return self.ubar[t] + np.outer(self.nu[t], self.nu[t])

    def sample_inputs(self, seed, ks, t):
        """Draw u_t for rollout indices ks; mean nu_t, central second moment Ubar_t."""
        if self.law == "deterministic":
            return np.tile(self.nu[t], (len(ks), 1))
        z = rs.unit_variance(seed, ks, t, rs.ROLE_INPUT, self.m, self.law)
        return self.nu[t] + z @ self._factors[t].T

    def deviation_bounds(self):
        """(c_U, c_nu): a.s. bounds on ||u_t|| and ||u_t - nu_t||; None if unbounded."""
        if self.law == "gaussian":
            return None, None
        if self.law == "deterministic":
            c_nu = 0.0
        else:
            c_nu = max(
                (float(np.linalg.norm(M, 2)) * _SQRT3 * np.sqrt(self.m) for M in self._factors),
                default=0.0,
            )
        c_u = max(float(np.linalg.norm(v)) for v in self.nu) + c_nu
        return c_u, c_nu

    def to_json_dict(self):
        return {
            "ell": self.ell,
            "m": self.m,
            "law": self.law,
            "seed": self.seed,
            "nu": self.nu.tolist(),
            "Ubar": self.ubar.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(nu=np.array(d["nu"]), ubar=np.array(d["Ubar"]), law=d["law"], seed=d.get("seed"))


# ---------------------------------------------------------------------------
# the system


class MultNoiseSystem:
    """Nominal (A, B) plus a noise model; derived covariances validated PSD."""

    def __init__(self, A, B, noise):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.ndim != 2 or self.B.shape[0] != self.A.shape[0]:
            raise ValueError(f"B must be n x m with n = {self.A.shape[0]}, got {self.B.shape}")
        if self.B.shape[1] > self.A.shape[0]:
            raise ValueError("input dimension m must satisfy m <= n")
        self.noise = noise
        n, m = self.n, self.m
        self.sigma_a = noise.implied_sigma_a(n)
        self.sigma_b = noise.implied_sigma_b(n, m)
        _psd_factor(self.sigma_a, "SigmaA")  # validation only
        _psd_factor(self.sigma_b, "SigmaB")
        self.c_abar, self.c_bbar = noise.bounds(n, m)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def require_bounded(self):
        """Error out if the noise law admits no a.s. bound (Gaussian components)."""
        if self.c_abar is None or self.c_bbar is None:
            raise ValueError(
                "noise model has no almost-sure bound (gaussian law); "
                "the finite-sample bound machinery requires a bounded law"
            )


def make_system(A, B, noise):
    """Build and validate a multiplicative-noise system."""
    return MultNoiseSystem(A, B, noise)


def embed_additive_noise(system, sigma_w, law=None):
    """Fold additive noise w_t (cov sigma_w) into the input channel.

    Returns a system with m+1 inputs whose nominal input matrix is [B 0] and
    whose vec(Bbar) covariance is blockdiag(SigmaB, sigma_w); driving it with
    inputs [u_t; 1] reproduces the original system plus additive noise.
    Use ``augment_schedule`` to extend an input schedule accordingly.
    """
    sigma_w = np.asarray(sigma_w, dtype=float)
    n, m = system.n, system.m
    if sigma_w.shape != (n, n):
        raise ValueError(f"sigma_w must be {n} x {n}, got {sigma_w.shape}")
    _psd_factor(sigma_w, "sigma_w")
    if m + 1 > n:
        raise ValueError("embedding needs m + 1 <= n")
    B_aug = np.hstack([system.B, np.zeros((n, 1))])
    nm = n * m
    sigma_b_aug = np.zeros((nm + n, nm + n))
    sigma_b_aug[:nm, :nm] = system.sigma_b
    sigma_b_aug[nm:, nm:] = sigma_w
    noise = CovarianceNoise(system.sigma_a, sigma_b_aug, law=law or system.noise.law)
    return MultNoiseSystem(system.A, B_aug, noise)


def augment_schedule(schedule):
    """Schedule for the additive-noise embedding: nu -> [nu; 1], Ubar zero-padded."""
    ell, m = schedule.ell, schedule.m
    nu = np.hstack([schedule.nu, np.ones((ell, 1))])
    ubar = np.zeros((ell, m + 1, m + 1))
    ubar[:, :m, :m] = schedule.ubar
    return InputSchedule(nu=nu, ubar=ubar, law=schedule.law, seed=schedule.seed)


# ---------------------------------------------------------------------------
# rollouts


@dataclass
class Rollout:
    """One trajectory x_0, u_0, ..., x_{ell-1}, u_{ell-1}, x_ell."""

    states: np.ndarray  # (ell + 1, n)
    inputs: np.ndarray  # (ell, m)


@dataclass
class RolloutSet:
    """n_r independent rollouts sharing one input schedule."""

    states: np.ndarray  # (n_r, ell + 1, n)
    inputs: np.ndarray  # (n_r, ell, m)
    schedule: InputSchedule
    seed: int

    @property
    def n_r(self):
        return self.states.shape[0]

    @property
    def ell(self):
        return self.states.shape[1] - 1

    @property
    def n(self):
        return self.states.shape[2]

    @property
    def m(self):
        return self.inputs.shape[2]

    def rollout(self, k):
        return Rollout(states=self.states[k], inputs=self.inputs[k])

    def to_json(self):
        return json.dumps(
            {
                "n": self.n,
                "m": self.m,
                "ell": self.ell,
                "n_r": self.n_r,
                "seed": self.seed,
                "schedule": self.schedule.to_json_dict(),
                "rollouts": [
                    {"x": self.states[k].tolist(), "u": self.inputs[k].tolist()}
                    for k in range(self.n_r)
                ],
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        states = np.array([r["x"] for r in d["rollouts"]], dtype=float)
        inputs = np.array([r["u"] for r in d["rollouts"]], dtype=float)
        if states.shape != (d["n_r"], d["ell"] + 1, d["n"]):
            raise ValueError("rollout JSON has inconsistent state shapes")
        return cls(
            states=states,
            inputs=inputs,
            schedule=InputSchedule.from_json_dict(d["schedule"]),
            seed=d["seed"],
        )


def simulate_rollouts(system, schedule, init, n_r, seed):
    """Generate n_r independent rollouts; bit-reproducible from the seed.

    Every (rollout, time, role) tuple draws from its own keyed stream, so the
    result is independent of batching and of how many rollouts are requested
    (the first k rollouts of any larger set are identical).
    """
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    if schedule.ell < 1:
        raise ValueError("schedule length must be >= 1")
    if schedule.m != system.m:
        raise ValueError(f"schedule input dim {schedule.m} != system m {system.m}")
    n, m, ell = system.n, system.m, schedule.ell
    ks = np.arange(n_r)
    states = np.empty((n_r, ell + 1, n))
    inputs = np.empty((n_r, ell, m))
    x = init.sample(seed, ks)
    states[:, 0, :] = x
    for t in range(ell):
        u = schedule.sample_inputs(seed, ks, t)
        Abar, Bbar = system.noise.sample(seed, ks, t, n, m)
        _check_noise_bound(system, Abar, Bbar)
        x = (
            np.einsum("kij,kj->ki", Abar, x)
            + x @ system.A.T
            + np.einsum("kij,kj->ki", Bbar, u)
            + u @ system.B.T
        )
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            bad = int(np.argmax(np.max(np.abs(x), axis=1)))
            raise SimulationDiverged(f"state exceeded {DIVERGENCE_LIMIT:g} at t={t + 1}, rollout {bad}")
        inputs[:, t, :] = u
        states[:, t + 1, :] = x
    return RolloutSet(states=states, inputs=inputs, schedule=schedule, seed=seed)


def _check_noise_bound(system, Abar, Bbar):
    """Hard a.s.-bound check for bounded noise laws (Frobenius >= spectral)."""
    if system.c_abar is not None:
        fa = np.sqrt(np.einsum("kij,kij->k", Abar, Abar))
        if fa.size and float(fa.max()) > system.c_abar + 1e-9:
            raise AssertionError("sampled Abar exceeded its declared a.s. bound")
    if system.c_bbar is not None:
        fb = np.sqrt(np.einsum("kij,kij->k", Bbar, Bbar))
        if fb.size and float(fb.max()) > system.c_bbar + 1e-9:
            raise AssertionError("sampled Bbar exceeded its declared a.s. bound")
