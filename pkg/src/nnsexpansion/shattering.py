"""Shattering of a conditional measure by a family of disjoint query sets.

A family ``A_1..A_k`` (K)-strongly shatters ``x`` when no part carries more
than ``1/K`` of ``nu_x``, and (K, gamma)-weakly shatters it when the total
overflow above ``1/K`` is at most ``gamma * nu(union)``.  Families are stored
as a label vector over V so that masses of every part reduce to one
``bincount``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from ._util import COVER_RTOL, as_indices, hoeffding_halfwidth, rng_for
from .expansion import robust_expansion_at
from .metric_graphs import PointMeasure, VertexDomain

EXACT_RATE_ENTRIES = 2**26


class PartitionFamily:
    """Disjoint parts of V encoded as ``labels[y] in {-1, 0, .., k-1}``.

    ``-1`` marks vertices outside every part.  ``keys`` optionally tags each
    part (the table cell it came from, for instance).
    """

    def __init__(self, labels, k, nu, beta=None, keys=None):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (nu.domain.size,):
            raise ValueError("labels must have one entry per vertex of V")
        if labels.size and (labels.min() < -1 or labels.max() >= k):
            raise ValueError("labels out of range")
        self.labels = labels
        self.labels.setflags(write=False)
        self.k = int(k)
        self.nu = nu
        self.part_measure = part_masses(labels, self.k, nu.values)
        self.union_measure = float(self.part_measure.sum())
        largest = float(self.part_measure.max()) if self.k else 0.0
        self.beta = largest if beta is None else float(beta)
        if largest > self.beta * (1 + COVER_RTOL) + 1e-15:
            raise ValueError(f"largest part measure {largest} exceeds beta={self.beta}")
        self.keys = None if keys is None else np.asarray(keys)

    @classmethod
    def from_parts(cls, parts, nu, beta=None, keys=None):
        labels = np.full(nu.domain.size, -1, dtype=np.int64)
        for i, part in enumerate(parts):
            idx = as_indices(part, nu.domain.size)
            if np.any(labels[idx] >= 0):
                raise ValueError("parts must be pairwise disjoint")
            labels[idx] = i
        return cls(labels, len(parts), nu, beta, keys)

    @property
    def parts(self):
        return [np.flatnonzero(self.labels == i) for i in range(self.k)]

    @property
    def covered(self):
        return self.labels >= 0

    def __len__(self):
        return self.k


def part_masses(labels, k, values):
    """Masses of each part under ``values``; ``values`` may be a batch (rows)."""
    values = np.asarray(values, dtype=np.float64)
    hit = labels >= 0
    if values.ndim == 1:
        return np.bincount(labels[hit], weights=values[hit], minlength=k)
    order = np.argsort(labels[hit], kind="stable")
    lab = labels[hit][order]
    cols = values[:, hit][:, order]
    out = np.zeros((values.shape[0], k))
    if lab.size:
        starts = np.flatnonzero(np.r_[True, lab[1:] != lab[:-1]])
        out[:, lab[starts]] = np.add.reduceat(cols, starts, axis=1)
    return out


def _values(nu_x):
    return nu_x.values if isinstance(nu_x, PointMeasure) else np.asarray(nu_x, dtype=np.float64)


def strong_shatter_check(partition, nu_x, K):
    """``max_i nu_x(A_i) <= 1/K``."""
    if not K > 0:
        raise ValueError("K must be positive")
    masses = part_masses(partition.labels, partition.k, _values(nu_x))
    return bool(masses.max(initial=0.0) <= (1.0 / K) * (1 + COVER_RTOL))


def shatter_excess(partition, nu_x, K):
    """``sum_i (nu_x(A_i) - 1/K)^+``; batched over rows of ``nu_x``."""
    masses = part_masses(partition.labels, partition.k, _values(nu_x))
    return np.clip(masses - 1.0 / K, 0.0, None).sum(axis=-1)


class WeakShatter(NamedTuple):
    shattered: bool
    excess: float


def weak_shatter_check(partition, nu_x, K, gamma):
    if not K > 0:
        raise ValueError("K must be positive")
    excess = float(shatter_excess(partition, nu_x, K))
    limit = gamma * partition.union_measure
    return WeakShatter(excess <= limit * (1 + COVER_RTOL) + 1e-15, excess)


def transfer_sparsity(K, beta, beta_prime):
    """Scale kept when the sparsity cap is loosened from ``beta`` to ``beta_prime``."""
    if not (K > 0 and beta > 0 and beta_prime > 0):
        raise ValueError("all arguments must be positive")
    # guard against ratios like 0.05/0.01 = 5.000000000000001
    pieces = max(1, math.ceil(beta_prime / beta - 1e-9))
    return K / pieces


def shattered_measure(partition, nu_x, K):
    """Sub-measure of ``nu_x`` with every part scaled down to mass at most ``1/K``.

    Parts already below the cap, and vertices outside every part, keep their
    mass.  Batched over rows when ``nu_x`` is a 2-D array.
    """
    if not K > 0:
        raise ValueError("K must be positive")
    vals = _values(nu_x)
    masses = part_masses(partition.labels, partition.k, vals)
    cap = 1.0 / K
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(masses > cap, cap / np.where(masses > 0, masses, 1.0), 1.0)
    lab = partition.labels
    factor = np.concatenate([factor, np.ones(factor.shape[:-1] + (1,))], axis=-1)
    scaled = vals * factor[..., lab]  # label -1 picks the trailing 1.0
    if isinstance(nu_x, PointMeasure):
        return PointMeasure(nu_x.domain, scaled)
    return scaled


# --------------------------------------------------------------------------
# shattering rate over random x
# --------------------------------------------------------------------------


class ShatterRate(NamedTuple):
    rate: float
    half_width: float
    mode: str
    samples: int


def _conditional_table(e, partition):
    return e.conditional_masses(partition.labels, partition.k)


def shattering_rate(e, partition, K, gamma, samples=10_000, seed=0, mode="auto"):
    """Probability over ``x ~ mu`` that ``partition`` (K, gamma)-weakly shatters ``x``.

    ``mode="exact"`` sums over every ``x``; ``"sample"`` draws ``samples``
    seeded points and attaches a 99% Hoeffding half-width; ``"auto"`` is exact
    when the conditional-mass table fits in memory.
    """
    mu, _ = e.marginals()
    limit = gamma * partition.union_measure * (1 + COVER_RTOL) + 1e-15
    feasible = e.domain_U.size * max(partition.k, 1) <= EXACT_RATE_ENTRIES and e.domain_V.enumerable
    if mode == "exact" and not feasible:
        raise ValueError("exact shattering rate needs an enumerable domain")
    if mode == "auto":
        mode = "exact" if feasible else "sample"
    if mode == "exact":
        M = _conditional_table(e, partition)
        excess = np.clip(M - 1.0 / K, 0.0, None).sum(axis=1)
        ok = excess <= limit
        return ShatterRate(float(mu.values[ok].sum()), 0.0, "exact", e.domain_U.size)
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = rng_for(seed, 0)
    xs = e.sample_mu(rng, samples)
    if feasible:
        M = _conditional_table(e, partition)[xs]
    else:
        M = np.stack([part_masses(partition.labels, partition.k, e.conditional(x).values) for x in xs])
    excess = np.clip(M - 1.0 / K, 0.0, None).sum(axis=1)
    rate = float(np.mean(excess <= limit))
    return ShatterRate(rate, hoeffding_halfwidth(samples), "monte-carlo", samples)


class PredictedScale(NamedTuple):
    K: float
    phi_r: float
    phi_mode: str
    coverage: float


def predicted_shattering_scale(e, beta, gamma, w=None, mode="auto"):
    """``K = Phi_r(beta, gamma^2/4) * gamma^3 / 16``, the scale expansion guarantees.

    Uses the robust expansion computed by ``robust_expansion_at``; when that is
    only an upper bound on large domains, the reported K is flagged through
    ``phi_mode`` and the trivial lower bound is used instead so K is never
    overstated.
    """
    coverage = gamma * gamma / 4.0
    res = robust_expansion_at(e, beta, coverage, w=w, mode=mode)
    phi = res.value if res.is_exact else res.lower
    return PredictedScale(phi * gamma**3 / 16.0, phi, res.mode, coverage)


def random_sparse_partition(nu, beta, seed=0, cover=1.0):
    """Seeded next-fit packing of a random vertex order into parts of measure <= beta.

    Only the first ``cover`` fraction (by measure) of the order is packed;
    the rest is left uncovered.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    vals = nu.values
    if vals.max() > beta * (1 + COVER_RTOL):
        raise ValueError("an atom of nu exceeds beta")
    rng = rng_for(seed, 0)
    order = rng.permutation(nu.domain.size)
    labels = np.full(nu.domain.size, -1, dtype=np.int64)
    part, acc, used = 0, 0.0, 0.0
    limit = beta * (1 + COVER_RTOL)
    for y in order:
        v = vals[y]
        if used + v > cover * nu.total * (1 + COVER_RTOL):
            break
        if acc + v > limit:
            part += 1
            acc = 0.0
        labels[y] = part
        acc += v
        used += v
    k = part + 1 if (labels >= 0).any() else 0
    return PartitionFamily(labels, k, nu, beta)


def equal_partition(domain: VertexDomain, nu, k):
    """Split V into ``k`` consecutive blocks of vertex codes."""
    labels = (np.arange(domain.size) * k) // domain.size
    return PartitionFamily(labels, k, nu)
