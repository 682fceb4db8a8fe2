"""Small numerical helpers shared across modules."""

from __future__ import annotations

import math

import numpy as np

#: Relative slack used when comparing accumulated float masses to a target.
COVER_RTOL = 1e-12


class InfeasibleExactMode(RuntimeError):
    """Raised when exact enumeration was requested but would be too large."""


class NoAdmissibleSet(ValueError):
    """Raised when no nonempty set satisfies the measure cap."""


def rng_for(seed, *keys):
    """Return a Generator derived deterministically from ``(seed, *keys)``.

    Trial ``i`` of an experiment seeded with ``s`` always gets the same stream,
    regardless of how trials are scheduled.
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def popcount(a):
    return np.bitwise_count(np.asarray(a, dtype=np.uint64)).astype(np.int64)


def fwht(a):
    """Unnormalized Walsh-Hadamard transform along the last axis.

    The last axis must have length ``2**d``.  Works on batches.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[-1]
    if n & (n - 1):
        raise ValueError("length must be a power of two")
    lead = a.shape[:-1]
    h = 1
    while h < n:
        a = a.reshape(lead + (n // (2 * h), 2, h))
        x = a[..., 0, :]
        y = a[..., 1, :]
        a = np.stack((x + y, x - y), axis=-2)
        h *= 2
    return a.reshape(lead + (n,))


def noise_apply(f, rho):
    """Apply the Bonami-Beckner noise operator T_rho to ``f`` on {0,1}^d.

    ``(T_rho f)(x) = E[f(y)]`` where ``y`` flips each bit of ``x``
    independently with probability ``(1 - rho) / 2``.
    """
    f = np.asarray(f, dtype=np.float64)
    n = f.shape[-1]
    # 0.0 ** 0 == 1 keeps the constant coefficient at rho == 0
    damp = np.power(float(rho), popcount(np.arange(n)).astype(np.float64))
    return fwht(fwht(f) * damp) / n


def hoeffding_halfwidth(trials, confidence=0.99):
    """Two-sided Hoeffding half-width for a mean of ``trials`` [0,1] draws."""
    alpha = 1.0 - confidence
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * trials))


def as_indices(S, size):
    """Normalize a vertex set (bool mask or index iterable) to sorted indices."""
    arr = np.asarray(S)
    if arr.dtype == bool:
        if arr.shape != (size,):
            raise ValueError(f"mask must have shape ({size},)")
        return np.flatnonzero(arr)
    idx = np.unique(arr.astype(np.int64).ravel())
    if idx.size and (idx[0] < 0 or idx[-1] >= size):
        raise ValueError("vertex index out of range")
    return idx


def as_mask(S, size):
    arr = np.asarray(S)
    if arr.dtype == bool:
        if arr.shape != (size,):
            raise ValueError(f"mask must have shape ({size},)")
        return arr
    mask = np.zeros(size, dtype=bool)
    mask[as_indices(arr, size)] = True
    return mask
