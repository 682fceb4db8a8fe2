"""Weighted bipartite metric graphs, their measures, and the hard instances.

Vertices of every domain are encoded as integers in ``[0, size)``: on the
hypercube the code is the bit string itself, on the grid ``{0..side}^d`` it is
the mixed-radix number with digit ``i`` equal to coordinate ``i``.

Two edge-distribution representations are provided.  ``DenseEdgeDistribution``
stores the full ``|U| x |V|`` probability matrix; ``NoiseDistribution`` is the
implicit kernel of the hypercube noise operator, whose products with indicator
vectors are computed by fast Walsh-Hadamard transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from ._util import as_indices, as_mask, hoeffding_halfwidth, noise_apply, popcount, rng_for

MAX_EXPLICIT_SIZE = 2**24
MAX_DENSE_ENTRIES = 2**24
MAX_HYPERCUBE_DIM = 30
EXACT_SUMMATION_SIZE = 2**12


@dataclass(frozen=True)
class VertexDomain:
    kind: str
    size: int
    d: int | None = None
    side: int | None = None

    @classmethod
    def explicit(cls, size):
        if not 1 <= size <= MAX_EXPLICIT_SIZE:
            raise ValueError(f"explicit domain size must be in [1, 2^24], got {size}")
        return cls("explicit", int(size))

    @classmethod
    def hypercube(cls, d):
        if not 0 <= d <= MAX_HYPERCUBE_DIM:
            raise ValueError(f"hypercube dimension must be in [0, {MAX_HYPERCUBE_DIM}], got {d}")
        return cls("hypercube", 2**d, d=int(d))

    @classmethod
    def grid(cls, side, d):
        if side < 1 or d < 1:
            raise ValueError("grid needs side >= 1 and d >= 1")
        return cls("grid", (side + 1) ** d, d=int(d), side=int(side))

    @property
    def enumerable(self):
        return self.size <= MAX_EXPLICIT_SIZE

    def vertices(self):
        if not self.enumerable:
            raise ValueError(f"domain of size {self.size} is too large to enumerate")
        return np.arange(self.size, dtype=np.int64)

    def decode(self, codes):
        """Grid codes -> coordinate array of shape (..., d)."""
        if self.kind != "grid":
            raise ValueError("decode is only defined for grid domains")
        codes = np.asarray(codes, dtype=np.int64)
        base = self.side + 1
        return np.stack([(codes // base**i) % base for i in range(self.d)], axis=-1)

    def encode(self, coords):
        if self.kind != "grid":
            raise ValueError("encode is only defined for grid domains")
        coords = np.asarray(coords, dtype=np.int64)
        base = self.side + 1
        return (coords * base ** np.arange(self.d)).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class PointMeasure:
    """A nonnegative measure on a finite vertex domain, stored densely."""

    domain: VertexDomain
    values: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != (self.domain.size,):
            raise ValueError(f"expected {self.domain.size} masses, got shape {vals.shape}")
        if np.any(vals < 0):
            raise ValueError("masses must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "total", float(vals.sum()))

    @classmethod
    def uniform(cls, domain):
        return cls(domain, np.full(domain.size, 1.0 / domain.size))

    def __call__(self, S):
        """Mass of a vertex set given as a mask or an index collection."""
        return float(self.values[as_indices(S, self.domain.size)].sum())

    def is_probability(self, tol=1e-9):
        return abs(self.total - 1.0) <= tol

    def is_uniform(self):
        return bool(np.all(self.values == self.values[0]))

    def __len__(self):
        return self.domain.size


# --------------------------------------------------------------------------
# Edge distributions
# --------------------------------------------------------------------------


class EdgeDistribution:
    """Joint law ``e`` of an edge ``(x, y)`` with ``x`` in U and ``y`` in V."""

    domain_U: VertexDomain
    domain_V: VertexDomain

    def pointwise(self, x, y):
        raise NotImplementedError

    def marginals(self):
        raise NotImplementedError

    def conditional(self, x):
        """The neighbor law ``nu_x(y) = e(x, y) / e(x, V)`` as a PointMeasure."""
        raise NotImplementedError

    def sample_mu(self, rng, size):
        raise NotImplementedError

    def sample_conditional(self, xs, rng):
        """One draw ``y ~ nu_x`` for each ``x`` in ``xs``."""
        raise NotImplementedError

    def edge_mass_into(self, A):
        """Vector over U of ``e(u, A)`` for a query set ``A`` in V."""
        raise NotImplementedError

    def conditional_masses(self, labels, k):
        """Matrix ``M[u, i] = nu_u(A_i)`` where ``labels[y] = i`` marks ``y in A_i``.

        Entries of ``labels`` equal to -1 belong to no part.
        """
        raise NotImplementedError

    def dense(self):
        raise NotImplementedError

    def mass(self, S_U, S_V):
        """``e(S_U, S_V)``: edge mass between a set in U and a set in V."""
        into = self.edge_mass_into(S_V)
        return float(into[as_indices(S_U, self.domain_U.size)].sum())

    @property
    def same_domain(self):
        return self.domain_U == self.domain_V


class DenseEdgeDistribution(EdgeDistribution):
    def __init__(self, matrix, domain_U=None, domain_V=None, tol=1e-9):
        mat = np.array(matrix, dtype=np.float64)
        if mat.ndim != 2:
            raise ValueError("edge matrix must be two-dimensional")
        if mat.size > MAX_DENSE_ENTRIES:
            raise ValueError("dense edge matrix too large")
        if np.any(mat < 0):
            raise ValueError("edge probabilities must be nonnegative")
        if abs(mat.sum() - 1.0) > tol:
            raise ValueError(f"edge probabilities must sum to 1, got {mat.sum()!r}")
        self.domain_U = domain_U or VertexDomain.explicit(mat.shape[0])
        self.domain_V = domain_V or VertexDomain.explicit(mat.shape[1])
        if (self.domain_U.size, self.domain_V.size) != mat.shape:
            raise ValueError("matrix shape does not match domains")
        mat.setflags(write=False)
        self.matrix = mat
        mu = mat.sum(axis=1)
        nu = mat.sum(axis=0)
        self._mu = PointMeasure(self.domain_U, mu)
        self._nu = PointMeasure(self.domain_V, nu)

    def pointwise(self, x, y):
        return self.matrix[np.asarray(x), np.asarray(y)]

    def marginals(self):
        return self._mu, self._nu

    def conditional(self, x):
        row = self.matrix[int(x)]
        tot = row.sum()
        if tot <= 0:
            raise ValueError(f"vertex {x} has zero marginal mass")
        return PointMeasure(self.domain_V, row / tot)

    def sample_mu(self, rng, size):
        return rng.choice(self.domain_U.size, size=size, p=self._mu.values / self._mu.total)

    def sample_conditional(self, xs, rng):
        xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
        rows = self.matrix[xs]
        cdf = np.cumsum(rows, axis=1)
        cdf /= cdf[:, -1:]
        u = rng.random(len(xs))
        out = (cdf < u[:, None]).sum(axis=1)
        return np.minimum(out, self.domain_V.size - 1)

    def edge_mass_into(self, A):
        idx = as_indices(A, self.domain_V.size)
        return self.matrix[:, idx].sum(axis=1)

    def conditional_masses(self, labels, k):
        labels = np.asarray(labels)
        onehot = np.zeros((self.domain_V.size, k))
        hit = labels >= 0
        onehot[np.flatnonzero(hit), labels[hit]] = 1.0
        mu = self._mu.values
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(mu[:, None] > 0, self.matrix / mu[:, None], 0.0)
        return cond @ onehot

    def dense(self):
        return self.matrix


class NoiseDistribution(EdgeDistribution):
    """Uniform ``x`` on {0,1}^d and ``y`` = ``x`` with each bit flipped w.p. (1-rho)/2."""

    def __init__(self, d, rho):
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {rho}")
        self.domain_U = VertexDomain.hypercube(d)
        self.domain_V = self.domain_U
        self.d = int(d)
        self.rho = float(rho)
        self.flip = (1.0 - self.rho) / 2.0
        keep = 1.0 - self.flip
        k = np.arange(self.d + 1)
        # nu_x(y) depends only on the Hamming distance |x ^ y|
        self.shell_prob = keep ** (self.d - k) * self.flip**k

    def pointwise(self, x, y):
        dist = popcount(np.bitwise_xor(np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64)))
        return self.shell_prob[dist] / self.domain_U.size

    def marginals(self):
        u = PointMeasure.uniform(self.domain_U)
        return u, u

    def conditional(self, x):
        verts = self.domain_V.vertices()
        return PointMeasure(self.domain_V, self.shell_prob[popcount(verts ^ int(x))])

    def sample_mu(self, rng, size):
        return rng.integers(0, self.domain_U.size, size=size, dtype=np.int64)

    def sample_conditional(self, xs, rng):
        xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
        flips = rng.random((len(xs), self.d)) < self.flip
        masks = flips.astype(np.int64) @ (np.int64(1) << np.arange(self.d, dtype=np.int64))
        return xs ^ masks

    def edge_mass_into(self, A):
        ind = as_mask(A, self.domain_V.size).astype(np.float64)
        return noise_apply(ind, self.rho) / self.domain_U.size

    def conditional_masses(self, labels, k):
        labels = np.asarray(labels)
        out = np.zeros((self.domain_U.size, k))
        for i in range(k):
            ind = (labels == i).astype(np.float64)
            if ind.any():
                out[:, i] = noise_apply(ind, self.rho)
        return out

    def dense(self):
        n = self.domain_U.size
        if n * n > MAX_DENSE_ENTRIES:
            raise ValueError(f"dense form limited to d <= 12, got d={self.d}")
        verts = np.arange(n)
        return self.pointwise(verts[:, None], verts[None, :])


def build_noise_distribution(d, rho):
    return NoiseDistribution(d, rho)


def marginals(e):
    return e.marginals()


def conditional_neighbor_measure(e, x):
    return e.conditional(x)


def graph_edge_distribution(G):
    """Uniform distribution over the edges of an (enumerable) unweighted graph."""
    adj = G.adjacency_matrix().astype(np.float64)
    return DenseEdgeDistribution(adj / adj.sum(), G.domain_U, G.domain_V)


# --------------------------------------------------------------------------
# Unweighted graphs
# --------------------------------------------------------------------------


class UnweightedGraph:
    """Bipartite graph; ``N(A)`` for ``A`` in V is a subset of U."""

    domain_U: VertexDomain
    domain_V: VertexDomain

    def adjacent(self, u, v):
        raise NotImplementedError

    def adjacency_matrix(self):
        if self.domain_U.size * self.domain_V.size > MAX_DENSE_ENTRIES:
            raise ValueError("graph too large for a dense adjacency matrix")
        u = self.domain_U.vertices()[:, None]
        v = self.domain_V.vertices()[None, :]
        return np.asarray(self.adjacent(u, v), dtype=bool)

    def neighbors(self, v):
        return np.flatnonzero(self.adjacent(self.domain_U.vertices(), int(v)))

    def neighborhood(self, A):
        """Boolean mask over U of ``N(A)``."""
        idx = as_indices(A, self.domain_V.size)
        if idx.size == 0:
            return np.zeros(self.domain_U.size, dtype=bool)
        return self.adjacency_matrix()[:, idx].any(axis=1)

    def neighborhoods_intersect(self, x, z):
        """Vectorized test of ``N(x) & N(z) != {}`` for ``x, z`` in U."""
        adj = self.adjacency_matrix()
        return (adj[np.asarray(x)] & adj[np.asarray(z)]).any(axis=-1)


class ExplicitGraph(UnweightedGraph):
    def __init__(self, adjacency, domain_U=None, domain_V=None):
        adj = np.array(adjacency, dtype=bool)
        self.domain_U = domain_U or VertexDomain.explicit(adj.shape[0])
        self.domain_V = domain_V or VertexDomain.explicit(adj.shape[1])
        adj.setflags(write=False)
        self._adj = adj

    def adjacent(self, u, v):
        return self._adj[np.asarray(u), np.asarray(v)]

    def adjacency_matrix(self):
        return self._adj


class HammingBallGraph(UnweightedGraph):
    """``G_r`` on {0,1}^d: ``u ~ v`` iff Hamming distance ``<= r`` (self-loops kept)."""

    def __init__(self, d, r):
        if not 0 <= r <= d:
            raise ValueError(f"need 0 <= r <= d, got r={r}, d={d}")
        self.domain_U = VertexDomain.hypercube(d)
        self.domain_V = self.domain_U
        self.d = int(d)
        self.r = int(r)

    def adjacent(self, u, v):
        return popcount(np.bitwise_xor(np.asarray(u, dtype=np.int64), np.asarray(v, dtype=np.int64))) <= self.r

    def neighborhood(self, A):
        mask = as_mask(A, self.domain_V.size).copy()
        verts = self.domain_V.vertices()
        for _ in range(self.r):
            grown = mask.copy()
            for bit in range(self.d):
                grown |= mask[verts ^ (1 << bit)]
            mask = grown
        return mask

    def neighborhoods_intersect(self, x, z):
        dist = popcount(np.bitwise_xor(np.asarray(x, dtype=np.int64), np.asarray(z, dtype=np.int64)))
        return dist <= 2 * self.r


class LinftyGridGraph(UnweightedGraph):
    """Grid ``{0..side}^d`` with ``u ~ v`` iff ell-infinity distance ``<= r``."""

    def __init__(self, side, d, r=1):
        self.domain_U = VertexDomain.grid(side, d)
        self.domain_V = self.domain_U
        self.r = int(r)

    def adjacent(self, u, v):
        cu = self.domain_U.decode(u)
        cv = self.domain_V.decode(v)
        return np.abs(cu - cv).max(axis=-1) <= self.r


def build_hypercube_ball_graph(d, r):
    return HammingBallGraph(d, r)


def ball_order(d):
    """Hypercube vertices sorted by Hamming weight, ties by ascending code."""
    verts = np.arange(2**d, dtype=np.int64)
    return verts[np.lexsort((verts, popcount(verts)))]


def hamming_ball(d, count):
    """Mask of the mixed-radius ball: the first ``count`` vertices of ``ball_order``."""
    if not 0 <= count <= 2**d:
        raise ValueError(f"ball size must be in [0, 2^{d}]")
    mask = np.zeros(2**d, dtype=bool)
    mask[ball_order(d)[:count]] = True
    return mask


def ball_size(d, radius):
    return sum(math.comb(d, j) for j in range(min(radius, d) + 1))


def complete_bipartite_graph(n_U, n_V):
    return ExplicitGraph(np.ones((n_U, n_V), dtype=bool))


def linfty_pi(side, rho):
    """One-coordinate measure with ``pi(i) = 2^{-(2 rho)^i}`` for ``i > 0``."""
    tail = np.array([2.0 ** (-((2.0 * rho) ** i)) for i in range(1, side + 1)])
    head = 1.0 - tail.sum()
    if head <= 0:
        raise ValueError(f"pi(0) = {head} <= 0 for side={side}, rho={rho}")
    return np.concatenate(([head], tail))


def build_linfty_measure(side, d, rho):
    pi = linfty_pi(side, rho)
    dom = VertexDomain.grid(side, d)
    coords = dom.decode(dom.vertices())
    return PointMeasure(dom, np.prod(pi[coords], axis=-1))


def build_linfty_graph(side, d, r=1):
    return LinftyGridGraph(side, d, r)


# --------------------------------------------------------------------------
# Independence checks
# --------------------------------------------------------------------------


class IndependenceCheck(NamedTuple):
    estimate: float
    verdict: bool
    half_width: float
    mode: str
    threshold: float


def _binomial_half_cdf(d, k):
    """``Pr[Bin(d, 1/2) <= k]`` as an exact Fraction."""
    k = min(int(math.floor(k)), d)
    if k < 0:
        return Fraction(0)
    return Fraction(sum(math.comb(d, j) for j in range(k + 1)), 2**d)


def check_strong_independence(G, mu, n, trials=100_000, seed=0, confidence=0.99):
    """Estimate ``Pr_{x,z ~ mu}[N(x) & N(z) != {}]`` against ``1 / (100 n^2)``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    threshold = 1.0 / (100.0 * n * n)
    if isinstance(G, HammingBallGraph) and mu.is_uniform():
        p = float(_binomial_half_cdf(G.d, 2 * G.r))
        return IndependenceCheck(p, p <= threshold, 0.0, "exact", threshold)
    if G.domain_U.size <= EXACT_SUMMATION_SIZE:
        adj = G.adjacency_matrix().astype(np.float64)
        inter = (adj @ adj.T) > 0
        p = float(mu.values @ inter @ mu.values)
        return IndependenceCheck(p, p <= threshold, 0.0, "exact", threshold)
    rng = rng_for(seed, 0)
    probs = mu.values / mu.total
    x = rng.choice(mu.domain.size, size=trials, p=probs)
    z = rng.choice(mu.domain.size, size=trials, p=probs)
    est = float(np.mean(G.neighborhoods_intersect(x, z)))
    hw = hoeffding_halfwidth(trials, confidence)
    return IndependenceCheck(est, est + hw <= threshold, hw, "monte-carlo", threshold)


class HammingWithin:
    """Collision predicate ``|y ^ z| <= threshold`` on hypercube codes."""

    def __init__(self, threshold):
        self.hamming_threshold = threshold

    def __call__(self, y, z):
        dist = popcount(np.bitwise_xor(np.asarray(y, dtype=np.int64), np.asarray(z, dtype=np.int64)))
        return dist <= self.hamming_threshold


def equality_collision():
    return HammingWithin(0)


class NeverCollide:
    never = True

    def __call__(self, y, z):
        return np.zeros(np.broadcast(np.asarray(y), np.asarray(z)).shape, dtype=bool)


def check_weak_independence(e, collide, n, gamma, trials=100_000, seed=0, confidence=0.99):
    """Estimate ``Pr_{x,z ~ mu, y ~ nu_x}[collide(y, z)]`` against ``gamma / n``.

    Since ``y`` is drawn from ``nu_x`` with ``x ~ mu`` independent of ``z``, the
    pair ``(y, z)`` has law ``nu x mu``; exact paths use that product form.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    threshold = gamma / n
    if getattr(collide, "never", False):
        return IndependenceCheck(0.0, True, 0.0, "exact", threshold)
    thr = getattr(collide, "hamming_threshold", None)
    if thr is not None and isinstance(e, NoiseDistribution):
        p = float(_binomial_half_cdf(e.d, thr))
        return IndependenceCheck(p, p <= threshold, 0.0, "exact", threshold)
    if e.domain_U.size * e.domain_V.size <= MAX_DENSE_ENTRIES:
        mu, nu = e.marginals()
        y = e.domain_V.vertices()[:, None]
        z = e.domain_U.vertices()[None, :]
        p = float(nu.values @ np.asarray(collide(y, z), dtype=np.float64) @ mu.values)
        return IndependenceCheck(p, p <= threshold, 0.0, "exact", threshold)
    rng = rng_for(seed, 0)
    x = e.sample_mu(rng, trials)
    y = e.sample_conditional(x, rng)
    z = e.sample_mu(rng, trials)
    est = float(np.mean(collide(y, z)))
    hw = hoeffding_halfwidth(trials, confidence)
    return IndependenceCheck(est, est + hw <= threshold, hw, "monte-carlo", threshold)
