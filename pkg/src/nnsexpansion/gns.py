"""Graphical neighbor search instances and the translation-table structure.

An instance is ``n`` points drawn from ``mu`` with independent uniform bits; a
query is a neighbor ``y ~ nu_{x_i}`` of a random point and the right answer is
``b_i``.  The translation table covers the hypercube with ``m`` random
translates ``a_i ^ A`` of a small ball ``A``; cell ``i`` stores the points in
the (larger) translate ``a_i ^ B``.  A query finds its first translate of
``A`` from the shared randomness for free and probes that single cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._util import popcount, rng_for
from .cellprobe import NO_ANSWER, NO_PROBE, CellProbeStructure
from .expansion import min_weight_cover
from .metric_graphs import NoiseDistribution, PointMeasure, VertexDomain, hamming_ball

MAX_TABLE_DIM = 24
DEFAULT_CAP = 10
DEFAULT_COVERAGE = 0.75
_QUERY_CHUNK = 2**22


# --------------------------------------------------------------------------
# instances
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GnsInstance:
    points: np.ndarray
    bits: np.ndarray
    source: object
    seed: int

    @property
    def n(self):
        return len(self.points)


def sample_instance(e, n, seed=0):
    """``n`` points i.i.d. from ``mu`` with i.i.d. uniform bits."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = rng_for(seed, 0)
    points = np.asarray(e.sample_mu(rng, n), dtype=np.int64)
    bits = rng.integers(0, 2, size=n, dtype=np.int64)
    points.setflags(write=False)
    bits.setflags(write=False)
    return GnsInstance(points, bits, e, int(seed))


def sample_queries(instance, e, count, seed=0):
    """``count`` queries ``y ~ nu_{x_i}`` with ``i`` uniform; returns ``(ys, idx)``."""
    rng = rng_for(seed, 1)
    idx = rng.integers(0, instance.n, size=count, dtype=np.int64)
    ys = np.asarray(e.sample_conditional(instance.points[idx], rng), dtype=np.int64)
    return ys, idx


def sample_query(instance, e, seed=0):
    ys, idx = sample_queries(instance, e, 1, seed)
    return int(ys[0]), int(idx[0])


# --------------------------------------------------------------------------
# base sets
# --------------------------------------------------------------------------


class BaseSets(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    coverage: float
    radius_A: int
    radius_B: int
    rho: float


def noise_for_radius(d, r):
    """Noise distribution whose expected flip count is ``r`` (rho = 1 - 2r/d)."""
    if not 0 <= r <= d / 2:
        raise ValueError("need 0 <= r <= d/2")
    return NoiseDistribution(d, 1.0 - 2.0 * r / d)


def _radius(mask):
    w = popcount(np.flatnonzero(mask))
    return int(w.max()) if w.size else -1


def choose_base_sets_hypercube(d, r, m, gamma=DEFAULT_COVERAGE):
    """Ball ``A`` of measure ``floor(2^d/m)/2^d`` and its smallest greedy cover ``B``.

    ``A`` is a mixed-radius ball: full shells plus the lowest codes of the next
    shell.  ``B`` collects vertices by decreasing ``e(u, A)`` until ``gamma``
    of the edge mass into ``A`` is captured; the achieved coverage is
    measured and returned.
    """
    if not 1 <= d <= MAX_TABLE_DIM:
        raise ValueError(f"d must lie in [1, {MAX_TABLE_DIM}]")
    size = 2**d
    count = size // m
    if count < 1:
        raise ValueError("m exceeds the number of vertices")
    e = noise_for_radius(d, r)
    A = hamming_ball(d, count)
    cover = min_weight_cover(e, A, gamma)
    B = np.zeros(size, dtype=bool)
    B[cover.B] = True
    into = e.edge_mass_into(A)
    coverage = float(into[B].sum() / into.sum())
    return BaseSets(A, B, coverage, _radius(A), _radius(B), e.rho)


# --------------------------------------------------------------------------
# translation table
# --------------------------------------------------------------------------


def _first_match(A, ys, translations):
    """Index of the first translate ``a_i ^ A`` containing each query, and match counts."""
    ys = np.asarray(ys, dtype=np.int64)
    first = np.full(len(ys), NO_PROBE, dtype=np.int64)
    count = np.zeros(len(ys), dtype=np.int64)
    m = len(translations)
    if m == 0:
        return first, count
    step = max(1, _QUERY_CHUNK // m)
    for lo in range(0, len(ys), step):
        hit = A[ys[lo : lo + step, None] ^ translations[None, :]]
        c = hit.sum(axis=1)
        f = np.argmax(hit, axis=1)
        first[lo : lo + step] = np.where(c > 0, f, NO_PROBE)
        count[lo : lo + step] = c
    return first, count


def _closest_bit(ys, cell):
    """Bit of the Hamming-closest stored point (first stored wins ties)."""
    ys = np.asarray(ys, dtype=np.int64)
    if not cell:
        return np.full(len(ys), NO_ANSWER, dtype=np.int64)
    pts = np.array([p for p, _ in cell], dtype=np.int64)
    bits = np.array([b for _, b in cell], dtype=np.int64)
    dist = popcount(ys[:, None] ^ pts[None, :])
    return bits[np.argmin(dist, axis=1)]


@dataclass
class TranslationTable:
    d: int
    m: int
    cap: int
    seed: int
    A: np.ndarray
    B: np.ndarray
    translations: np.ndarray
    cells: list
    overflow: np.ndarray
    radius_A: int = -1
    radius_B: int = -1
    log: dict = field(default_factory=dict)

    @property
    def word_bits(self):
        """Bits per cell: ``cap`` records of (vertex code, bit)."""
        return self.cap * (self.d + 1)

    def cell_index(self, ys):
        return _first_match(self.A, ys, self.translations)[0]

    def query(self, y):
        """``(bit or None, probes)`` for one query; no match means no probe."""
        i = int(self.cell_index([y])[0])
        if i == NO_PROBE:
            return None, 0
        bit = int(_closest_bit([y], self.cells[i])[0])
        return (None if bit == NO_ANSWER else bit), 1

    def answer_all(self, ys):
        """Answers for many queries plus first-match index and match counts."""
        ys = np.asarray(ys, dtype=np.int64)
        first, count = _first_match(self.A, ys, self.translations)
        out = np.full(len(ys), NO_ANSWER, dtype=np.int64)
        order = np.argsort(first, kind="stable")
        keys, starts = np.unique(first[order], return_index=True)
        ends = np.r_[starts[1:], len(order)]
        for key, lo, hi in zip(keys, starts, ends):
            if key == NO_PROBE:
                continue
            rows = order[lo:hi]
            out[rows] = _closest_bit(ys[rows], self.cells[int(key)])
        return QueryOutcome(out, first, count)

    def stored_ok(self):
        """Every stored point lies in its cell's translate of ``B``."""
        for i, cell in enumerate(self.cells):
            for p, _ in cell:
                if not self.B[p ^ int(self.translations[i])]:
                    return False
        return True

    def as_cell_probe(self):
        return translation_cell_probe([self])


class QueryOutcome(NamedTuple):
    answers: np.ndarray
    first: np.ndarray
    matches: np.ndarray


def _fill_cells(points, bits, B, translations, cap):
    m = len(translations)
    cells = [[] for _ in range(m)]
    overflow = np.zeros(m, dtype=np.int64)
    if len(points) == 0:
        return cells, overflow
    member = B[np.asarray(points)[:, None] ^ translations[None, :]]
    for i in range(m):
        rows = np.flatnonzero(member[:, i])
        for r in rows[:cap]:
            cells[i].append((int(points[r]), int(bits[r])))
        overflow[i] = max(0, len(rows) - cap)
    return cells, overflow


def build_translation_structure(instance, base, m, cap=DEFAULT_CAP, seed=0):
    """Store every point in every cell whose translate of ``B`` contains it.

    Cells keep the first ``cap`` points in instance order; the number of
    dropped points per cell is kept in ``overflow``.
    """
    if m < 1:
        raise ValueError("m must be positive")
    size = len(base.A)
    d = int(round(math.log2(size)))
    rng = rng_for(seed, 2)
    translations = rng.integers(0, size, size=m, dtype=np.int64)
    cells, overflow = _fill_cells(instance.points, instance.bits, base.B, translations, cap)
    return TranslationTable(d, m, cap, int(seed), base.A, base.B, translations, cells, overflow, base.radius_A, base.radius_B)


class InsertResult(NamedTuple):
    t_U: int
    eligible: int
    dropped: int


def insert_point(ds, x, b):
    """Write ``(x, b)`` into every cell whose translate of ``B`` holds ``x``.

    Returns the number of cells written; cells already at capacity drop the
    point and are counted separately.
    """
    x = int(x)
    hit = np.flatnonzero(ds.B[x ^ ds.translations])
    written = 0
    for i in hit:
        if len(ds.cells[i]) < ds.cap:
            ds.cells[i].append((x, int(b)))
            written += 1
        else:
            ds.overflow[i] += 1
    return InsertResult(written, len(hit), len(hit) - written)


def insertion_success_mass(ds, e, x, b):
    """``nu_x``-mass of queries the structure now answers with ``b``."""
    nu_x = e.conditional(int(x)).values
    ys = np.arange(len(ds.A), dtype=np.int64)
    answers = ds.answer_all(ys).answers
    return float(nu_x[answers == int(b)].sum())


def empty_translation_structure(base, m, cap=DEFAULT_CAP, seed=0):
    empty = GnsInstance(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), None, seed)
    return build_translation_structure(empty, base, m, cap, seed)


# --------------------------------------------------------------------------
# several tables probed in turn
# --------------------------------------------------------------------------


def build_multi_translation(instance, base, m, t, cap=DEFAULT_CAP, seed=0):
    """``t`` independent translation tables; a query probes its cell in each."""
    return [build_translation_structure(instance, base, m, cap, seed=rng_for(seed, 3, k).integers(2**62)) for k in range(t)]


def translation_cell_probe(tables):
    """Non-adaptive cell-probe view: probe ``k`` reads the first-match cell of table ``k``."""
    first = tables[0]
    contents = [[tuple(cell) for cell in tab.cells] for tab in tables]

    def make_lookup(tab):
        return lambda ys, prior: tab.cell_index(ys)

    def finisher(ys, read):
        stored = [p for cell in read if cell for p in cell]
        return _closest_bit(ys, stored)

    return CellProbeStructure(
        t=len(tables),
        m=first.m,
        w=first.word_bits,
        tables=contents,
        lookups=[make_lookup(tab) for tab in tables],
        finisher=finisher,
        domain_size=len(first.A),
        adaptive=False,
    )


# --------------------------------------------------------------------------
# fixed point m = n * Phi_r(1/m, gamma)
# --------------------------------------------------------------------------


class FixedPoint(NamedTuple):
    m: int
    phi: float
    load: float
    converged: bool
    base: BaseSets
    scan: list


def fixed_point_m(d, r, n, gamma=DEFAULT_COVERAGE, m_values=None):
    """Scan ``m`` for the best solution of ``m = n * Phi_r(1/m, gamma)``.

    ``Phi_r`` is the robust expansion ``nu(B)/nu(A)`` of the ball ``A`` of
    measure ``1/m`` with its greedy cover.  The expected cell load
    ``n * nu(B) = n * Phi_r / m`` equals 1 exactly at the fixed point; the
    scan returns the ``m`` whose load is closest to 1 on a log scale and
    flags ``converged`` when that load lies in ``[1/2, 2]``.
    """
    if m_values is None:
        m_values = [2**k for k in range(1, d + 1)]
    scan = []
    best = None
    for m in m_values:
        base = choose_base_sets_hypercube(d, r, m, gamma)
        nuA = base.A.mean()
        nuB = base.B.mean()
        phi = float(nuB / nuA)
        load = n * phi / m
        scan.append((int(m), phi, float(load)))
        key = abs(math.log(load))
        if best is None or key < best[0] - 1e-12:
            best = (key, int(m), phi, float(load), base)
    _, m, phi, load, base = best
    return FixedPoint(m, phi, load, 0.5 <= load <= 2.0, base, scan)


# --------------------------------------------------------------------------
# reduction to approximate near neighbor
# --------------------------------------------------------------------------


class AnnReduction:
    """Dataset ``{x_i : b_i = 1}`` with the (c, r) near-neighbor scorer.

    A query scores 1 when some stored point is within ``r``, 0 when all are at
    least ``c*r`` away and ``-1`` (undefined) in between.
    """

    def __init__(self, instance, r, c):
        self.points = np.asarray(instance.points)[np.asarray(instance.bits) == 1]
        self.r = r
        self.c = c

    def nearest(self, ys):
        ys = np.asarray(ys, dtype=np.int64)
        if self.points.size == 0:
            return np.full(len(ys), np.inf)
        return popcount(ys[:, None] ^ self.points[None, :]).min(axis=1).astype(np.float64)

    def score(self, ys):
        dist = self.nearest(ys)
        out = np.full(len(dist), -1, dtype=np.int64)
        out[dist <= self.r] = 1
        out[dist >= self.c * self.r] = 0
        return out


def ann_dataset_from_gns(instance, r, c):
    return AnnReduction(instance, r, c)


# --------------------------------------------------------------------------
# text dump / load
# --------------------------------------------------------------------------

_MAGIC = "translation-table 1"


def _hexmask(mask):
    return np.packbits(np.asarray(mask, dtype=np.uint8)).tobytes().hex()


def _unhexmask(text, size):
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    return np.unpackbits(raw)[:size].astype(bool)


def dumps(ds):
    """Line-oriented text record that ``loads`` inverts exactly."""
    lines = [
        _MAGIC,
        f"d {ds.d}",
        f"m {ds.m}",
        f"cap {ds.cap}",
        f"seed {ds.seed}",
        f"radii {ds.radius_A} {ds.radius_B}",
        f"A {_hexmask(ds.A)}",
        f"B {_hexmask(ds.B)}",
        "translations " + " ".join(str(int(a)) for a in ds.translations),
        "overflow " + " ".join(str(int(o)) for o in ds.overflow),
    ]
    for i, cell in enumerate(ds.cells):
        lines.append(f"cell {i} " + " ".join(f"{p}:{b}" for p, b in cell))
    return "\n".join(lines) + "\n"


def loads(text):
    lines = text.splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError("not a translation-table record")
    head = {}
    for line in lines[1:10]:
        key, _, rest = line.partition(" ")
        head[key] = rest
    d, m, cap = int(head["d"]), int(head["m"]), int(head["cap"])
    size = 2**d
    ra, rb = (int(v) for v in head["radii"].split())
    translations = np.array([int(v) for v in head["translations"].split()], dtype=np.int64)
    overflow = np.array([int(v) for v in head["overflow"].split()], dtype=np.int64)
    cells = []
    for i, line in enumerate(lines[10:]):
        parts = line.split(" ")
        if parts[0] != "cell" or int(parts[1]) != i:
            raise ValueError(f"malformed cell line {i}")
        cell = []
        for tok in parts[2:]:
            if tok:
                p, b = tok.split(":")
                cell.append((int(p), int(b)))
        cells.append(cell)
    if len(cells) != m or len(translations) != m:
        raise ValueError("record does not hold m cells")
    return TranslationTable(
        d, m, cap, int(head["seed"]), _unhexmask(head["A"], size), _unhexmask(head["B"], size),
        translations, cells, overflow, ra, rb,
    )


def dump(ds, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps(ds))


def load(path):
    with open(path, encoding="ascii") as fh:
        return loads(fh.read())


def uniform_measure(d):
    return PointMeasure.uniform(VertexDomain.hypercube(d))
