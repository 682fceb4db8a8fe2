"""A cell-probe machine and the sampling experiments run against it.

A structure has ``t`` tables of ``m`` cells of ``w`` bits; probe ``k`` reads
cell ``F_k(y, contents read so far)`` of table ``k`` and a finisher maps the
``t`` contents to the answer bit.  Cell contents are arbitrary hashable
Python objects standing for ``w``-bit words; the declared ``w`` is what the
bit accounting uses.

The sampling procedures pick a few cells from each table, keep track of the
query sets whose whole read path lies inside the sample, and the decoder
guesses each database bit from a majority vote over that query set under a
shattering-clipped conditional measure.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from ._util import COVER_RTOL, rng_for
from .metric_graphs import PointMeasure
from .shattering import PartitionFamily, part_masses, shattered_measure, shatter_excess

NO_PROBE = -1
NO_ANSWER = -1


@dataclass
class CellProbeStructure:
    """``t`` tables of ``m`` cells with lookup functions and a finisher.

    ``lookups[k](ys, prior)`` returns, for the queries ``ys`` sharing the
    tuple ``prior`` of contents read so far, the cell of table ``k`` each one
    reads, or ``NO_PROBE`` to skip the table.  ``finisher(ys, contents)``
    returns 0, 1 or ``NO_ANSWER`` per query.  Non-adaptive structures ignore
    ``prior``, which lets every level be evaluated in one call.
    """

    t: int
    m: int
    w: int
    tables: Sequence[Sequence]
    lookups: Sequence[Callable]
    finisher: Callable
    domain_size: int
    adaptive: bool = False

    def __post_init__(self):
        if len(self.tables) != self.t or len(self.lookups) != self.t:
            raise ValueError("need exactly t tables and t lookup functions")
        for table in self.tables:
            if len(table) != self.m:
                raise ValueError("every table must have m cells")

    def lookup(self, k, ys, prior):
        cells = np.asarray(self.lookups[k](np.asarray(ys, dtype=np.int64), prior), dtype=np.int64)
        if cells.size and (cells.min() < NO_PROBE or cells.max() >= self.m):
            raise ValueError(f"lookup {k} returned a cell outside [0, {self.m})")
        return cells

    def read(self, k, cell):
        return None if cell == NO_PROBE else self.tables[k][cell]

    def read_paths(self, ys, reader=None):
        """Cells read by every query, as a ``(len(ys), t)`` matrix.

        ``reader(k, cell)`` supplies contents (defaults to the real tables);
        replaying against a sample's contents is how decoders stay honest.
        """
        reader = reader or self.read
        ys = np.asarray(ys, dtype=np.int64)
        cells = np.full((len(ys), self.t), NO_PROBE, dtype=np.int64)
        for k in range(self.t):
            if not self.adaptive or k == 0:
                cells[:, k] = self.lookup(k, ys, ())
                continue
            for rows, prior_cells in _group_rows(cells[:, :k]):
                prior = tuple(reader(j, c) for j, c in enumerate(prior_cells))
                cells[rows, k] = self.lookup(k, ys[rows], prior)
        return cells

    def answer(self, ys, reader=None):
        """Output bit (or ``NO_ANSWER``) for every query in ``ys``."""
        reader = reader or self.read
        ys = np.asarray(ys, dtype=np.int64)
        cells = self.read_paths(ys, reader)
        out = np.full(len(ys), NO_ANSWER, dtype=np.int64)
        for rows, path in _group_rows(cells):
            contents = tuple(reader(k, c) for k, c in enumerate(path))
            out[rows] = self.finisher(ys[rows], contents)
        return out

    def probes_used(self, ys):
        return (self.read_paths(ys) != NO_PROBE).sum(axis=1)


def _group_rows(mat):
    """Yield ``(row_indices, row_values)`` for each distinct row of ``mat``."""
    if mat.shape[0] == 0:
        return
    if mat.shape[1] == 0:
        yield np.arange(mat.shape[0]), ()
        return
    uniq, inv = np.unique(mat, axis=0, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(len(uniq) + 1))
    for g in range(len(uniq)):
        yield order[bounds[g] : bounds[g + 1]], tuple(int(c) for c in uniq[g])


# --------------------------------------------------------------------------
# partitions induced by lookups
# --------------------------------------------------------------------------


class LookupClasses(NamedTuple):
    keys: np.ndarray
    members: list


def lookup_partition(ds, k, active, prior=()):
    """Classes of the active query set by the cell ``F_k`` sends them to.

    ``keys`` are sorted cell indices (``NO_PROBE`` first when present) and
    ``members[i]`` the ascending query codes reading cell ``keys[i]``.
    """
    active = np.asarray(active, dtype=np.int64)
    if active.size == 0:
        return LookupClasses(np.empty(0, dtype=np.int64), [])
    cells = ds.lookup(k, active, prior)
    keys, inv = np.unique(cells, return_inverse=True)
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(len(keys) + 1))
    members = [np.sort(active[order[bounds[i] : bounds[i + 1]]]) for i in range(len(keys))]
    return LookupClasses(keys, members)


def refine_to_sparse(classes, nu, bound, n_parts=None):
    """Split every class into consecutive pieces of ``nu``-measure at most ``bound``.

    Pieces follow ascending vertex codes.  The family is padded with empty
    parts up to ``n_parts`` (default: twice the number of classes).  Each
    part's key is the key of the class it came from, ``NO_PROBE`` for padding.
    """
    if isinstance(classes, LookupClasses):
        keys, members = list(classes.keys), classes.members
    else:
        members = [np.sort(np.asarray(c, dtype=np.int64)) for c in classes]
        keys = list(range(len(members)))
    vals = nu.values
    limit = bound * (1 + COVER_RTOL)
    pieces, piece_keys = [], []
    for key, cls in zip(keys, members):
        if cls.size == 0:
            continue
        w = vals[cls]
        if w.max() > limit:
            raise ValueError(f"an atom of measure {w.max()} exceeds the bound {bound}")
        start, acc = 0, 0.0
        for i, v in enumerate(w):
            if acc + v > limit:
                pieces.append(cls[start:i])
                piece_keys.append(key)
                start, acc = i, 0.0
            acc += v
        pieces.append(cls[start:])
        piece_keys.append(key)
    if n_parts is None:
        n_parts = 2 * len(members)
    if len(pieces) > n_parts:
        raise ValueError(f"refinement needs {len(pieces)} parts, more than {n_parts}")
    labels = np.full(nu.domain.size, -1, dtype=np.int64)
    for i, piece in enumerate(pieces):
        labels[piece] = i
    piece_keys += [NO_PROBE] * (n_parts - len(pieces))
    return PartitionFamily(labels, n_parts, nu, bound, keys=np.array(piece_keys, dtype=np.int64))


class ContentionReport(NamedTuple):
    tau: float
    histogram: np.ndarray


def contention(ds, nu):
    """``max_l nu(Q_l)`` with ``Q_l`` the queries reading cell ``l`` of any table.

    ``histogram[k, l] = nu(queries reading cell l of table k)``.
    """
    ys = np.arange(ds.domain_size, dtype=np.int64)
    cells = ds.read_paths(ys)
    hist = np.zeros((ds.t, ds.m))
    for k in range(ds.t):
        hit = cells[:, k] != NO_PROBE
        hist[k] = np.bincount(cells[hit, k], weights=nu.values[hit], minlength=ds.m)
    return ContentionReport(float(hist.max(initial=0.0)), hist)


# --------------------------------------------------------------------------
# sampling procedures
# --------------------------------------------------------------------------


@dataclass
class SamplePaths:
    """Outcome of a path- or cell-sampling run.

    ``Lambda[j, k]`` is the sampled part index in ``[2m]`` and ``cells[j, k]``
    the table cell it stands for (``NO_PROBE`` for padding or probe-free
    parts).  ``contents[j][k]`` is what that cell holds.  ``levels[k]`` holds
    the refined families the level-``k+1`` draws were made from (one per path
    in path mode, one in cell mode) and ``active[k]`` the query sets after
    ``k`` levels: ``A^(jk)`` per path, or the single set ``A^k``.
    """

    mode: str
    s: int
    t: int
    m: int
    w: int
    Lambda: np.ndarray
    cells: np.ndarray
    contents: list
    levels: list
    active: list
    structure_id: int = 0
    extra: dict = field(default_factory=dict)

    def union(self, k):
        """Mask of queries whose first ``k`` probes lie in the sample."""
        sets = self.active[k]
        mask = np.zeros(sets[0].shape, dtype=bool)
        for s in sets:
            mask |= s
        return mask

    def union_measure(self, k, nu):
        return float(nu.values[self.union(k)].sum())

    def target(self, k):
        if self.mode == "path":
            return self.s / (2.0 * self.m) ** k
        return (self.s / (2.0 * self.m)) ** k

    def sampled_bits(self):
        return self.s * self.t * self.w

    def index_bits(self):
        return self.s * self.t * math.ceil(math.log2(2 * self.m))

    def reader(self):
        """Content oracle restricted to sampled cells; unsampled reads raise."""
        table = {}
        for j in range(self.cells.shape[0]):
            for k in range(self.t):
                c = int(self.cells[j, k])
                if c != NO_PROBE:
                    table[(k, c)] = self.contents[j][k]

        def read(k, cell):
            if cell == NO_PROBE:
                return None
            return table[(k, cell)]

        return read


def concentration_band(sample, k, gamma):
    """Two-sided band ``(1 -/+ 2k sqrt(ln(t/gamma)/s)) * target(k)`` for the level-``k`` sampled measure."""
    dev = 2 * k * math.sqrt(math.log(max(sample.t / gamma, 1.0)) / sample.s)
    c = sample.target(k)
    return max(0.0, (1 - dev) * c), (1 + dev) * c


def within_bands(sample, nu, gamma):
    """True when every level's sampled-set measure lies in its concentration band."""
    for k in range(1, sample.t + 1):
        lo, hi = concentration_band(sample, k, gamma)
        v = sample.union_measure(k, nu)
        if not lo * (1 - COVER_RTOL) <= v <= hi * (1 + COVER_RTOL):
            return False
    return True


def _draw(rng, parts, size, replace):
    if replace:
        return rng.integers(0, parts, size=size)
    return rng.choice(parts, size=size, replace=False)


def path_sample(ds, s, nu, seed=0):
    """Sample ``s`` read paths, one refined part per table.

    The level-0 family is the ``1/m``-sparse, ``2m``-part refinement of the
    first lookup's classes; the first column is drawn without replacement.
    Path ``j`` then refines its surviving set under the contents it has read
    into a ``1/m^(k+1)``-sparse family and draws uniformly from ``[2m]``.
    """
    if not 1 <= s <= 2 * ds.m:
        raise ValueError("need 1 <= s <= 2m")
    if nu.values.max() > (1.0 / ds.m**ds.t) * (1 + COVER_RTOL):
        raise ValueError(f"path sampling needs every atom of nu below 1/m^t = {1.0 / ds.m**ds.t}")
    rng = rng_for(seed, 0)
    size = ds.domain_size
    every = np.arange(size, dtype=np.int64)
    Lambda = np.zeros((s, ds.t), dtype=np.int64)
    cells = np.full((s, ds.t), NO_PROBE, dtype=np.int64)
    contents = [[None] * ds.t for _ in range(s)]
    level0 = refine_to_sparse(lookup_partition(ds, 0, every), nu, 1.0 / ds.m, 2 * ds.m)
    levels = [[level0] * s]
    Lambda[:, 0] = _draw(rng, 2 * ds.m, s, replace=False)
    active = [[np.ones(size, dtype=bool)] * s]
    current = []
    for j in range(s):
        part = int(Lambda[j, 0])
        current.append(level0.labels == part)
        cells[j, 0] = level0.keys[part]
        contents[j][0] = ds.read(0, int(cells[j, 0]))
    active.append(list(current))
    for k in range(1, ds.t):
        fams = []
        Lambda[:, k] = _draw(rng, 2 * ds.m, s, replace=True)
        nxt = []
        for j in range(s):
            prior = tuple(contents[j][:k])
            fam = refine_to_sparse(
                lookup_partition(ds, k, np.flatnonzero(current[j]), prior), nu, 1.0 / ds.m ** (k + 1), 2 * ds.m
            )
            fams.append(fam)
            part = int(Lambda[j, k])
            nxt.append(fam.labels == part)
            cells[j, k] = fam.keys[part]
            contents[j][k] = ds.read(k, int(cells[j, k]))
        levels.append(fams)
        current = nxt
        active.append(list(current))
    return SamplePaths("path", s, ds.t, ds.m, ds.w, Lambda, cells, contents, levels, active, id(ds))


def cell_sample(ds, s, nu, seed=0):
    """Sample ``s`` refined parts of every table.

    Level ``k`` refines ``A^k`` by the next lookup (under the sampled contents
    each query actually read) into a ``1/m``-sparse ``2m``-part family, draws
    ``s`` distinct parts and lets ``A^(k+1)`` be their union.
    """
    if not 1 <= s <= 2 * ds.m:
        raise ValueError("need 1 <= s <= 2m")
    rng = rng_for(seed, 0)
    size = ds.domain_size
    Lambda = np.zeros((s, ds.t), dtype=np.int64)
    cells = np.full((s, ds.t), NO_PROBE, dtype=np.int64)
    contents = [[None] * ds.t for _ in range(s)]
    current = np.ones(size, dtype=bool)
    active = [[current]]
    levels = []
    # cells already read by each query (needed to replay adaptive lookups)
    path_cells = np.full((size, ds.t), NO_PROBE, dtype=np.int64)
    sampled = {}
    for k in range(ds.t):
        ys = np.flatnonzero(current)
        if not ds.adaptive or k == 0:
            classes = lookup_partition(ds, k, ys, ())
        else:
            keys, members = {}, {}
            for rows, prior_cells in _group_rows(path_cells[ys, :k]):
                prior = tuple(sampled.get((j, c)) for j, c in enumerate(prior_cells))
                sub = lookup_partition(ds, k, ys[rows], prior)
                for key, mem in zip(sub.keys, sub.members):
                    members.setdefault(int(key), []).append(mem)
            order = sorted(members)
            classes = LookupClasses(
                np.array(order, dtype=np.int64), [np.sort(np.concatenate(members[c])) for c in order]
            )
        fam = refine_to_sparse(classes, nu, 1.0 / ds.m, 2 * ds.m)
        levels.append([fam])
        Lambda[:, k] = _draw(rng, 2 * ds.m, s, replace=False)
        chosen = np.isin(fam.labels, Lambda[:, k])
        for j in range(s):
            cells[j, k] = fam.keys[int(Lambda[j, k])]
            contents[j][k] = ds.read(k, int(cells[j, k]))
            sampled[(k, int(cells[j, k]))] = contents[j][k]
        # refined parts inherit the cell of the class they were cut from
        hit = np.flatnonzero(chosen)
        path_cells[hit, k] = fam.keys[fam.labels[hit]]
        current = chosen
        active.append([current])
    return SamplePaths("cell", s, ds.t, ds.m, ds.w, Lambda, cells, contents, levels, active, id(ds))


# --------------------------------------------------------------------------
# decoding
# --------------------------------------------------------------------------


def _level_collection(sample, k, nu):
    """Single family holding every part the level-``k+1`` draws were made from."""
    fams = sample.levels[k]
    if sample.mode == "cell" or k == 0:
        return fams[0]
    size = nu.domain.size
    labels = np.full(size, -1, dtype=np.int64)
    offset = 0
    for fam in fams:
        hit = fam.labels >= 0
        labels[hit] = fam.labels[hit] + offset
        offset += fam.k
    return PartitionFamily(labels, offset, nu, fam.beta if fams else None)


def level_scale(sample, K, k):
    """Clipping scale at level ``k`` (1-based): ``K m^(k-t)`` per path, else ``K``."""
    if sample.mode == "path":
        return K * float(sample.m) ** (k - sample.t)
    return K


class Diagnostics(NamedTuple):
    wshatter: np.ndarray
    rep_mass: np.ndarray
    small_mass: np.ndarray
    target: np.ndarray
    rep_ok: np.ndarray
    rep_ok_alt: np.ndarray
    small_ok: np.ndarray
    small_ok_alt: np.ndarray


def measure_cascade(sample, nu_x, nu, K, gamma):
    """Clipped measures ``nu~^k`` for ``k = 0..t`` and per-level shattering flags.

    ``nu_x`` may be one measure or a batch (rows).  Returns ``(cascade,
    wshatter)`` with ``wshatter[..., k-1]`` the (K_k, gamma^2/t)-weak
    shattering of ``x`` by the level-``k`` collection.
    """
    cur = np.asarray(nu_x.values if isinstance(nu_x, PointMeasure) else nu_x, dtype=np.float64)
    cascade = [cur]
    flags = []
    for k in range(sample.t):
        coll = _level_collection(sample, k, nu)
        Kk = level_scale(sample, K, k + 1)
        hat = shattered_measure(coll, cascade[0], Kk)
        excess = shatter_excess(coll, cascade[0], Kk)
        flags.append(excess <= (gamma * gamma / sample.t) * coll.union_measure * (1 + COVER_RTOL) + 1e-15)
        cur = np.minimum(cur, hat)
        cascade.append(cur)
    return cascade, np.stack(flags, axis=-1)


def _sample_answers(ds, sample):
    """Answers on the final sampled query set, replayed from sampled contents only."""
    final = sample.union(sample.t)
    ys = np.flatnonzero(final)
    answers = np.full(ds.domain_size, NO_ANSWER, dtype=np.int64)
    if ys.size:
        answers[ys] = ds.answer(ys, reader=sample.reader())
    return answers, final


def event_diagnostics(ds, sample, nu_x, nu, K, gamma, answers=None):
    """Rep/Small masses at every level with both threshold conventions.

    ``rep_mass[..., k-1] = nu~^k(union of level-k sampled sets)`` and
    ``small_mass[..., k-1, b] = nu~^k(V_b within that union)``, where ``V_b``
    is the set of queries the structure answers with ``b``.  Rep is checked at
    ``(1 - 3k gamma/t) * target`` (``alt``: ``gamma^2``) and Small at
    ``(2 gamma + k gamma/t) * target`` (``alt``: ``k gamma^2/t``).
    """
    if sample.structure_id != id(ds):
        raise ValueError("sample was drawn from a different structure")
    if answers is None:
        answers = ds.answer(np.arange(ds.domain_size, dtype=np.int64))
    cascade, wshatter = measure_cascade(sample, nu_x, nu, K, gamma)
    t = sample.t
    batch = cascade[0].shape[:-1]
    rep = np.zeros(batch + (t,))
    small = np.zeros(batch + (t, 2))
    target = np.array([sample.target(k) for k in range(1, t + 1)])
    for k in range(1, t + 1):
        u = sample.union(k)
        rep[..., k - 1] = cascade[k][..., u].sum(axis=-1)
        for b in (0, 1):
            small[..., k - 1, b] = cascade[k][..., u & (answers == b)].sum(axis=-1)
    ks = np.arange(1, t + 1)
    rep_thr = (1 - 3 * ks * gamma / t) * target
    rep_thr_alt = (1 - 3 * ks * gamma * gamma / t) * target
    small_thr = (2 * gamma + ks * gamma / t) * target
    small_thr_alt = (2 * gamma + ks * gamma * gamma / t) * target
    return Diagnostics(
        wshatter,
        rep,
        small,
        target,
        rep >= rep_thr,
        rep >= rep_thr_alt,
        small <= small_thr[:, None],
        small <= small_thr_alt[:, None],
    )


class DecodeResult(NamedTuple):
    bits: np.ndarray
    undecodable: np.ndarray
    correct: np.ndarray
    recovered_fraction: float
    mass: np.ndarray


def conditional_rows(e, xs):
    return np.stack([e.conditional(int(x)).values for x in xs])


def majority_decode(ds, sample, instance, e, K, gamma):
    """Guess every database bit from the clipped majority on the sampled set.

    A point whose clipped measure puts no mass on answered sampled queries is
    undecodable and counted as an error.  Ties go to 0.
    """
    if sample.structure_id != id(ds):
        raise ValueError("sample was drawn from a different structure")
    _, nu = e.marginals()
    answers, final = _sample_answers(ds, sample)
    X = conditional_rows(e, instance.points)
    cascade, _ = measure_cascade(sample, X, nu, K, gamma)
    last = cascade[-1]
    mass = np.stack([last[:, final & (answers == b)].sum(axis=1) for b in (0, 1)], axis=1)
    undecodable = mass.sum(axis=1) <= 0
    bits = (mass[:, 1] > mass[:, 0]).astype(np.int64)
    correct = (bits == instance.bits) & ~undecodable
    return DecodeResult(bits, undecodable, correct, float(correct.mean()), mass)


# --------------------------------------------------------------------------
# budgets and report rows
# --------------------------------------------------------------------------


class SampleBudget(NamedTuple):
    s: int
    raw: float
    clamped: bool


def sample_budget(n, t, w, m, gamma, s_max=None):
    """``s = gamma^2 n / (4 t (w + log2(2m)))``, floored and kept in ``[1, 2m]``."""
    raw = gamma * gamma * n / (4.0 * t * (w + math.log2(2 * m)))
    s = int(math.floor(raw))
    hi = 2 * m if s_max is None else s_max
    clamped = s < 1 or s > hi
    return SampleBudget(min(max(s, 1), hi), raw, clamped)


def encoding_bits(sample):
    """Bits used by the encoding: sampled contents plus their cell indices."""
    return sample.sampled_bits() + sample.index_bits()


CSV_COLUMNS = (
    "seed",
    "mode",
    "d",
    "n",
    "m",
    "w",
    "t",
    "s",
    "K",
    "gamma",
    "recovered_fraction",
    "undecodable",
    "mean_rep_mass",
    "mean_small_mass",
)


def experiment_row(seed, sample, d, n, K, gamma, decoded, diagnostics, instance_bits):
    small = diagnostics.small_mass[:, -1, :]
    wrong = small[np.arange(len(instance_bits)), 1 - np.asarray(instance_bits)]
    return {
        "seed": seed,
        "mode": sample.mode,
        "d": d,
        "n": n,
        "m": sample.m,
        "w": sample.w,
        "t": sample.t,
        "s": sample.s,
        "K": K,
        "gamma": gamma,
        "recovered_fraction": decoded.recovered_fraction,
        "undecodable": int(decoded.undecodable.sum()),
        "mean_rep_mass": float(diagnostics.rep_mass[:, -1].mean()),
        "mean_small_mass": float(wrong.mean()),
    }


def rows_to_csv(rows, columns=CSV_COLUMNS):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in columns})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
