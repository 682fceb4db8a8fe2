"""Vertex, edge and robust expansion.

Exact values come from exhaustive enumeration of every nonempty query set
whose measure is within the cap.  On domains where that is out of reach the
functions evaluate a family of structured candidate sets (Hamming balls,
subcubes, random sets) and report the minimum as an *upper* bound, together
with a trivial lower bound so the true value is bracketed.  Results always
carry a ``mode`` flag saying which of the two happened.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, islice

import numpy as np

from ._util import COVER_RTOL, InfeasibleExactMode, NoAdmissibleSet, as_indices, rng_for
from .metric_graphs import PointMeasure, ball_size, hamming_ball

EXACT_SET_CAP = 2_000_000
EXACT_VERTEX_DOMAIN = 2**16
EXACT_ROBUST_DOMAIN = 2**12
_BITMASK_LIMIT = 20

EXACT = "exact"
GREEDY_INNER_EXACT = "greedy-inner-exact"
GREEDY_INNER_UPPER = "greedy-inner-upper-bound"
CANDIDATE_UPPER = "monte-carlo-upper-bound"


@dataclass(frozen=True)
class ExpansionQuery:
    delta: float
    gamma: float = 1.0
    weight: PointMeasure | None = None

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.weight is not None and not self.weight.is_probability():
            raise ValueError("auxiliary weight must have total mass 1")


@dataclass(frozen=True)
class ExpansionResult:
    value: float
    witness_A: np.ndarray
    witness_B: np.ndarray | None
    mode: str
    lower: float | None = None
    upper: float | None = None

    @property
    def is_exact(self):
        return self.mode in (EXACT, GREEDY_INNER_EXACT)


# --------------------------------------------------------------------------
# subset enumeration
# --------------------------------------------------------------------------


def count_admissible(weights, delta):
    """Upper bound on the number of nonempty sets with ``weights(A) <= delta``."""
    w = np.sort(np.asarray(weights, dtype=np.float64))
    n = len(w)
    if n <= _BITMASK_LIMIT:
        return 2**n - 1
    total, k, acc = 0, 0, 0.0
    while k < n:
        acc += w[k]
        if acc > delta * (1 + COVER_RTOL):
            break
        k += 1
        total += math.comb(n, k)
    return total


def admissible_subsets(weights, delta, cap=EXACT_SET_CAP, chunk=65536):
    """Yield boolean membership matrices of nonempty sets with measure <= delta.

    Rows of each yielded block are sets; columns are vertices.  Raises
    ``InfeasibleExactMode`` when more than ``cap`` candidate sets would need
    to be visited.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    limit = delta * (1 + COVER_RTOL)
    if count_admissible(w, delta) > cap:
        raise InfeasibleExactMode(
            f"exact enumeration over {n} vertices at measure {delta} exceeds {cap} sets"
        )
    if n <= _BITMASK_LIMIT:
        bits = np.arange(n, dtype=np.int64)
        for start in range(1, 2**n, chunk):
            masks = np.arange(start, min(start + chunk, 2**n), dtype=np.int64)
            member = ((masks[:, None] >> bits) & 1).astype(bool)
            keep = member @ w <= limit
            if keep.any():
                yield member[keep]
        return
    order = np.sort(w)
    for k in range(1, n + 1):
        if order[:k].sum() > limit:
            break
        it = combinations(range(n), k)
        while True:
            block = np.array(list(islice(it, chunk)), dtype=np.int64)
            if block.size == 0:
                break
            member = np.zeros((len(block), n), dtype=bool)
            member[np.arange(len(block))[:, None], block] = True
            keep = w[block].sum(axis=1) <= limit
            if keep.any():
                yield member[keep]


def _argmin_first(values):
    """Index of the first entry within relative tolerance of the minimum."""
    best = values.min()
    tol = abs(best) * 1e-12
    return int(np.flatnonzero(values <= best + tol)[0])


# --------------------------------------------------------------------------
# candidate sets for large domains
# --------------------------------------------------------------------------


def candidate_sets(domain, nu, delta, n_random=64, seed=0):
    """Structured and random query sets of ``nu``-measure at most ``delta``."""
    limit = delta * (1 + COVER_RTOL)
    vals = nu.values
    seen = set()

    def emit(mask):
        key = np.packbits(mask).tobytes()
        if mask.any() and key not in seen and vals[mask].sum() <= limit:
            seen.add(key)
            return True
        return False

    if domain.kind == "hypercube":
        d = domain.d
        if nu.is_uniform():
            count = int(math.floor(limit * domain.size))
            radii = [radius for radius in range(d + 1) if ball_size(d, radius) <= count]
            for size in sorted({ball_size(d, radius) for radius in radii} | {count}):
                if size:
                    mask = hamming_ball(d, size)
                    if emit(mask):
                        yield mask
        for c in range(d + 1):
            mask = np.arange(domain.size) < 2 ** (d - c)
            if emit(mask):
                yield mask
    rng = rng_for(seed, 1)
    for _ in range(n_random):
        perm = rng.permutation(domain.size)
        cum = np.cumsum(vals[perm])
        take = int(np.searchsorted(cum, limit, side="right"))
        if take == 0:
            continue
        mask = np.zeros(domain.size, dtype=bool)
        mask[perm[:take]] = True
        if emit(mask):
            yield mask


# --------------------------------------------------------------------------
# vertex expansion
# --------------------------------------------------------------------------


def _vertex_ratios(adj, mu, member):
    hood = (member.astype(np.float64) @ adj.T.astype(np.float64)) > 0
    return hood @ mu


def vertex_expansion_at(G, mu, nu, delta, mode="auto", n_random=64, seed=0):
    """``min mu(N(A)) / nu(A)`` over nonempty ``A`` in V with ``nu(A) <= delta``."""
    ExpansionQuery(delta)
    if nu.values.min() > delta * (1 + COVER_RTOL):
        raise NoAdmissibleSet(f"no vertex of V has measure <= {delta}")
    exact_ok = G.domain_V.size <= EXACT_VERTEX_DOMAIN and count_admissible(nu.values, delta) <= EXACT_SET_CAP
    if mode == "exact" and not exact_ok:
        raise InfeasibleExactMode("vertex expansion: domain too large for exact mode")
    if mode != "candidate" and exact_ok:
        adj = G.adjacency_matrix()
        best, best_A = math.inf, None
        for member in admissible_subsets(nu.values, delta):
            ratio = _vertex_ratios(adj, mu.values, member) / (member @ nu.values)
            i = _argmin_first(ratio)
            if ratio[i] < best * (1 - 1e-12):
                best, best_A = float(ratio[i]), np.flatnonzero(member[i])
        return ExpansionResult(best, best_A, None, EXACT, best, best)
    best, best_A = math.inf, None
    for mask in candidate_sets(G.domain_V, nu, delta, n_random, seed):
        ratio = mu(G.neighborhood(mask)) / nu(mask)
        if ratio < best:
            best, best_A = ratio, np.flatnonzero(mask)
    lower = mu.values[mu.values > 0].min() / delta
    return ExpansionResult(best, best_A, None, CANDIDATE_UPPER, lower, best)


def vertex_expansion_global(G, mu, nu, k_grid):
    """Largest ``k`` in ``k_grid`` with ``Phi_v(delta) >= k`` for all ``delta <= 1/(2k)``.

    A level ``delta`` admitting no nonempty set passes vacuously.  Returns
    ``None`` when no grid point passes.
    """
    ks = sorted(float(k) for k in k_grid)
    if not ks:
        raise ValueError("k_grid must be nonempty")
    if ks[0] <= 0:
        raise ValueError("k_grid entries must be positive")
    delta_max = min(1.0, 1.0 / (2.0 * ks[0]))
    if G.domain_V.size > EXACT_VERTEX_DOMAIN:
        raise InfeasibleExactMode("global vertex expansion needs an enumerable domain")
    adj = G.adjacency_matrix()
    masses, ratios = [], []
    for member in admissible_subsets(nu.values, delta_max):
        m = member @ nu.values
        masses.append(m)
        ratios.append(_vertex_ratios(adj, mu.values, member) / m)
    masses = np.concatenate(masses) if masses else np.empty(0)
    ratios = np.concatenate(ratios) if ratios else np.empty(0)
    best = None
    for k in ks:
        sel = masses <= (1.0 / (2.0 * k)) * (1 + COVER_RTOL)
        if not sel.any() or ratios[sel].min() >= k * (1 - COVER_RTOL):
            best = k
    if best is not None and float(best).is_integer():
        best = int(best)
    return best


# --------------------------------------------------------------------------
# edge expansion
# --------------------------------------------------------------------------


def edge_expansion_at(e, delta, mode="auto", n_random=64, seed=0):
    """``min e(A, V) / e(A, A)`` over ``A`` with ``mu(A) <= delta``; needs U = V.

    Sets with ``e(A, A) = 0`` have infinite expansion and are skipped; if every
    admissible set is of that kind the value is ``math.inf``.
    """
    ExpansionQuery(delta)
    if not e.same_domain:
        raise ValueError("edge expansion requires U and V to be the same domain")
    mu, _ = e.marginals()
    if mu.values.min() > delta * (1 + COVER_RTOL):
        raise NoAdmissibleSet(f"no vertex has measure <= {delta}")
    size = e.domain_U.size
    exact_ok = size <= EXACT_VERTEX_DOMAIN and size * size <= 2**24 and count_admissible(mu.values, delta) <= EXACT_SET_CAP
    if mode == "exact" and not exact_ok:
        raise InfeasibleExactMode("edge expansion: domain too large for exact mode")
    if mode != "candidate" and exact_ok:
        E = e.dense()
        best, best_A = math.inf, None
        for member in admissible_subsets(mu.values, delta):
            mf = member.astype(np.float64)
            inside = ((mf @ E) * mf).sum(axis=1)
            out = mf @ mu.values
            with np.errstate(divide="ignore"):
                ratio = np.where(inside > 0, out / np.where(inside > 0, inside, 1.0), math.inf)
            if np.isfinite(ratio).any():
                i = _argmin_first(ratio)
                if ratio[i] < best * (1 - 1e-12):
                    best, best_A = float(ratio[i]), np.flatnonzero(member[i])
        return ExpansionResult(best, best_A, None, EXACT, best, best)
    best, best_A = math.inf, None
    for mask in candidate_sets(e.domain_U, mu, delta, n_random, seed):
        inside = float(e.edge_mass_into(mask)[mask].sum())
        if inside > 0:
            ratio = mu(mask) / inside
            if ratio < best:
                best, best_A = ratio, np.flatnonzero(mask)
    return ExpansionResult(best, best_A, None, CANDIDATE_UPPER, 1.0, best)


# --------------------------------------------------------------------------
# robust expansion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Cover:
    B: np.ndarray
    weight: float
    exact: bool


def _greedy_order(contrib, w):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(w > 0, contrib / np.where(w > 0, w, 1.0), np.where(contrib > 0, np.inf, -np.inf))
    ratio = np.where(contrib > 0, ratio, -np.inf)
    # stable sort keeps ascending vertex codes among ties
    return np.argsort(-ratio, axis=-1, kind="stable")


def min_weight_cover(e, A, gamma, w=None):
    """Greedy cover ``B`` of U with ``e(B, A) >= gamma * e(U, A)``.

    Vertices are taken by decreasing ``e(u, A) / w(u)``.  Under uniform ``w``
    the shortest such prefix is an exact minimizer of ``|B|``; otherwise the
    returned weight is an upper bound on the minimum.
    """
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    mu, _ = e.marginals()
    wv = (w or mu).values
    contrib = e.edge_mass_into(A)
    total = contrib.sum()
    if total <= 0:
        raise ValueError("e(U, A) must be positive")
    order = _greedy_order(contrib, wv)
    cum = np.cumsum(contrib[order])
    k = int(np.searchsorted(cum, gamma * total * (1 - COVER_RTOL), side="left")) + 1
    k = min(k, len(order))
    B = np.sort(order[:k])
    exact = bool(np.all(wv == wv[0]))
    return Cover(B, float(wv[B].sum()), exact)


def robust_expansion_of_set(e, A, gamma, w=None):
    """``phi_r(A, gamma) = w(B) / nu(A)`` for the greedy cover ``B``."""
    _, nu = e.marginals()
    nuA = nu(A)
    if nuA <= 0:
        raise ValueError("nu(A) must be positive")
    return min_weight_cover(e, A, gamma, w).weight / nuA


def _robust_block(E, nu, wv, member, gamma):
    """Greedy-cover ratio for every set (row) of ``member``."""
    mf = member.astype(np.float64)
    contrib = mf @ E.T
    nuA = mf @ nu
    target = gamma * contrib.sum(axis=1) * (1 - COVER_RTOL)
    order = _greedy_order(contrib, wv[None, :])
    rows = np.arange(len(member))[:, None]
    cum = np.cumsum(contrib[rows, order], axis=1)
    k = (cum < target[:, None]).sum(axis=1)
    k = np.minimum(k, E.shape[0] - 1)
    weight = np.cumsum(wv[order], axis=1)[np.arange(len(member)), k]
    return weight / nuA, order, k


def robust_expansion_at(e, delta, gamma, w=None, mode="auto", n_random=64, seed=0):
    """``Phi_r(delta, gamma) = min phi_r(A, gamma)`` over ``A`` with ``nu(A) <= delta``.

    ``mode="auto"`` enumerates exactly when the domain has at most 2^12
    vertices and the admissible family is small enough; ``"exact"`` refuses
    instead of falling back; ``"candidate"`` always uses candidate sets.
    """
    ExpansionQuery(delta, gamma, w)
    mu, nu = e.marginals()
    wm = w or mu
    wv = wm.values
    if nu.values.min() > delta * (1 + COVER_RTOL):
        raise NoAdmissibleSet(f"no vertex of V has measure <= {delta}")
    exact_ok = (
        e.domain_V.size <= EXACT_ROBUST_DOMAIN
        and e.domain_U.size * e.domain_V.size <= 2**24
        and count_admissible(nu.values, delta) <= EXACT_SET_CAP
    )
    if mode == "exact" and not exact_ok:
        raise InfeasibleExactMode("robust expansion: domain too large for exact mode")
    uniform_w = bool(np.all(wv == wv[0]))
    if mode != "candidate" and exact_ok:
        E = e.dense()
        chunk = max(1, 2**21 // max(1, e.domain_U.size))
        best, best_A, best_B = math.inf, None, None
        for member in admissible_subsets(nu.values, delta, chunk=chunk):
            ratio, order, k = _robust_block(E, nu.values, wv, member, gamma)
            i = _argmin_first(ratio)
            if ratio[i] < best * (1 - 1e-12):
                best = float(ratio[i])
                best_A = np.flatnonzero(member[i])
                best_B = np.sort(order[i, : k[i] + 1])
        # report the witness's own ratio so re-evaluation reproduces it bit-for-bit
        best = float(wv[best_B].sum() / nu.values[best_A].sum())
        flag = GREEDY_INNER_EXACT if uniform_w else GREEDY_INNER_UPPER
        return ExpansionResult(best, best_A, best_B, flag, best if uniform_w else None, best)
    best, best_A, best_B = math.inf, None, None
    for mask in candidate_sets(e.domain_V, nu, delta, n_random, seed):
        cover = min_weight_cover(e, mask, gamma, wm)
        ratio = cover.weight / nu(mask)
        if ratio < best:
            best, best_A, best_B = ratio, np.flatnonzero(mask), cover.B
    lower = trivial_robust_lower_bound(wm, delta)
    return ExpansionResult(best, best_A, best_B, CANDIDATE_UPPER, lower, best)


def trivial_robust_lower_bound(w, delta):
    """Any covering ``B`` is nonempty, so ``w(B) / nu(A) >= min_u w(u) / delta``."""
    return float(w.values.min() / delta)


def vertex_style_cover_value(e, delta, w=None):
    """``min w(supp e(., A)) / nu(A)``: the covering value that must capture all edges."""
    mu, nu = e.marginals()
    wv = (w or mu).values
    E = e.dense()
    support = (E > 0).astype(np.float64)
    best = math.inf
    for member in admissible_subsets(nu.values, delta):
        hood = (member.astype(np.float64) @ support.T) > 0
        ratio = (hood @ wv) / (member @ nu.values)
        best = min(best, float(ratio.min()))
    return best


def reevaluate_witness(e, result, gamma, w=None):
    """Recompute ``w(B) / nu(A)`` for a robust result and check B covers A."""
    mu, nu = e.marginals()
    wv = (w or mu).values
    A = as_indices(result.witness_A, e.domain_V.size)
    B = as_indices(result.witness_B, e.domain_U.size)
    contrib = e.edge_mass_into(A)
    covered = contrib[B].sum() >= gamma * contrib.sum() * (1 - COVER_RTOL)
    return float(wv[B].sum() / nu.values[A].sum()), bool(covered)
