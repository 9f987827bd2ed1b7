"""Counter-based random streams keyed by (seed, rollout, time, role).

Every (rollout k, time t, role) tuple owns an independent SplitMix64 stream
whose seed is derived by hashing the tuple into 64 bits.  Draw i of a stream
is a pure function of (master seed, k, t, role, i), so simulation output does
not depend on execution order or batching: simulating rollouts 0..2 produces
bit-identical values whether or not rollouts 3.. are generated alongside.

SplitMix64 is the finalizer-based generator of Steele et al.; the stream
position is a plain counter, which is what makes the scheme order-free.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "ROLE_X0",
    "ROLE_INPUT",
    "ROLE_NOISE_A",
    "ROLE_NOISE_B",
    "stream_keys",
    "uniform01",
    "unit_variance",
    "truncated_normal",
]

ROLE_X0 = 0
ROLE_INPUT = 1
ROLE_NOISE_A = 2
ROLE_NOISE_B = 3

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SQRT3 = np.sqrt(3.0)


def _mix64(z):
    """SplitMix64 finalizer (bijective avalanche on uint64, wrapping mod 2^64)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def stream_keys(seed, k, t, role):
    """64-bit stream seeds for rollout indices ``k`` (scalar or array)."""
    k = np.asarray(k, dtype=np.uint64)
    with np.errstate(over="ignore"):
        s = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GAMMA)
        s = _mix64(s ^ ((k + np.uint64(1)) * _GAMMA))
        s = _mix64(s ^ ((np.uint64(t) + np.uint64(1)) * _M1))
        return _mix64(s ^ ((np.uint64(role) + np.uint64(1)) * _M2))


def uniform01(seed, k, t, role, count):
    """``count`` U(0,1) draws per stream; shape (len(k), count) or (count,).

    Draw i of a stream with seed s is mix64(s + (i+1)*gamma), i.e. SplitMix64
    advanced by a counter.  Values lie strictly inside (0, 1).
    """
    keys = stream_keys(seed, k, t, role)
    with np.errstate(over="ignore"):
        idx = (np.arange(1, count + 1, dtype=np.uint64)) * _GAMMA
        if keys.ndim == 0:
            words = _mix64(keys + idx)
        else:
            words = _mix64(keys[:, None] + idx[None, :])
    # 53-bit mantissa, offset by half a ulp so 0 is excluded
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0**-53)


def unit_variance(seed, k, t, role, count, law):
    """Zero-mean unit-variance i.i.d. components per stream.

    law = "uniform": uniform on [-sqrt(3), sqrt(3)] (bounded a.s.);
    law = "gaussian": standard normal via inverse CDF.
    """
    u = uniform01(seed, k, t, role, count)
    if law == "uniform":
        return (2.0 * u - 1.0) * _SQRT3
    if law == "gaussian":
        return ndtri(u)
    raise ValueError(f"unknown component law {law!r}")


def truncated_normal(seed, k, t, role, count, radius):
    """Standard normal conditioned on |z| <= radius, per component."""
    u = uniform01(seed, k, t, role, count)
    lo = ndtr(-radius)
    hi = ndtr(radius)
    return ndtri(lo + u * (hi - lo))
