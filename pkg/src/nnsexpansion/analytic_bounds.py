"""Closed-form expansion estimates and space/time lower-bound calculators.

Isoperimetric formulas for the hypercube and the weighted l-infinity grid,
plus calculators that invert the cell-probe inequalities

    (8 m w t / n)^t >= Phi_v                      cell sampling, deterministic
    9 m^t w t / n  >= Phi_v(1 / m^t)              path sampling, deterministic
    (m w t^4 / n)^(2t) >= Phi_r(1/m, gamma/t)     cell sampling, randomized
    m^t w / n      >= Phi_r(1/m^t, gamma/t)       path sampling, randomized

into the smallest number of cells ``m`` satisfying each.  Comparisons are done
in exact rational arithmetic so a reported minimum is never off by rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

DEFAULT_GAMMA = 0.01
SCAN_CAP = 2**64


def _q(x):
    """Exact rational view of an int, Fraction or float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, bool)):
        return Fraction(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x}")
    return Fraction(x)


def _positive(**kw):
    for name, val in kw.items():
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")


# --------------------------------------------------------------------------
# hypercube and grid isoperimetry
# --------------------------------------------------------------------------


def harper_h(d, i):
    """Measure of a radius-``i`` Hamming ball in {0,1}^d, as an exact Fraction."""
    if not 0 <= i <= d:
        raise ValueError(f"need 0 <= i <= d, got i={i}, d={d}")
    return Fraction(sum(math.comb(d, j) for j in range(i + 1)), 2**d)


def ball_level(d, a):
    """Largest ``i`` with ``h_i <= a``; 0 when ``a`` is below a single point."""
    a = _q(a)
    level = 0
    for i in range(d + 1):
        if harper_h(d, i) <= a:
            level = i
        else:
            break
    return level


def harper_neighborhood_bound(d, r, a):
    """Lower bound on ``mu(N_r(A))`` for every ``A`` in {0,1}^d with ``nu(A) >= a``.

    ``A`` is at least as large as the biggest ball fitting under ``a``, so its
    ``r``-neighborhood is at least as large as that ball grown by ``r``.  Equal
    to ``h_{i+r}`` when ``a = h_i``.
    """
    if not 0 <= r <= d:
        raise ValueError(f"need 0 <= r <= d, got r={r}")
    if not 0 < a <= 1:
        raise ValueError(f"a must lie in (0, 1], got {a}")
    return harper_h(d, min(ball_level(d, a) + r, d))


def hypercontractive_self_mass_bound(a, rho):
    """Upper bound ``a^(2/(1+rho))`` on ``e(A, A)`` under T_rho when ``mu(A) = a``."""
    if not 0 < a <= 1:
        raise ValueError(f"a must lie in (0, 1], got {a}")
    if not 0 <= rho <= 1:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return float(a) ** (2.0 / (1.0 + rho))


def small_target_edge_fraction(a, rho):
    """If ``mu(B) <= a^(4 rho^2)`` then ``e(A, B) <= a^(rho^2) e(A, V)`` for ``mu(A) = a``.

    Returns the pair ``(target_cap, edge_fraction)``.
    """
    if not 0 < a <= 1:
        raise ValueError(f"a must lie in (0, 1], got {a}")
    return float(a) ** (4 * rho * rho), float(a) ** (rho * rho)


class RobustBound(NamedTuple):
    gamma: float
    bound: float
    ratio_bound: float


def hypercube_robust_expansion_bound(beta, rho):
    """Certified ``(gamma, bound)`` pair for the noisy hypercube at measure ``beta``.

    Any ``B`` capturing more than ``beta^(rho^2)`` of the edges leaving a set of
    measure ``beta`` has ``mu(B) > beta^(4 rho^2)``.  ``bound`` is
    ``beta^(1 - 4 rho^2)`` as the result is usually quoted; ``ratio_bound``
    is ``mu(B) / nu(A) > beta^(4 rho^2 - 1)``, the form that directly lower
    bounds robust expansion.
    """
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if not 0 <= rho <= 1:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    e = 4 * rho * rho
    return RobustBound(beta ** (rho * rho), beta ** (1 - e), beta ** (e - 1))


def robust_from_edge(delta, gamma, phi_e_at_2delta):
    """``gamma * Phi_e(2 delta) / 2``, a lower bound on ``Phi_r(delta, gamma)``."""
    _positive(delta=delta, gamma=gamma, phi_e=phi_e_at_2delta)
    return gamma * phi_e_at_2delta / 2.0


def linfty_neighborhood_bound(a, rho):
    """``a^(1/rho)``: lower bound on the grid measure of the distance-1 neighborhood."""
    if not 0 < a <= 1:
        raise ValueError(f"a must lie in (0, 1], got {a}")
    if not rho > 0.5:
        raise ValueError(f"rho must exceed 1/2, got {rho}")
    return float(a) ** (1.0 / rho)


# --------------------------------------------------------------------------
# lower-bound calculators
# --------------------------------------------------------------------------


@dataclass
class Inequality:
    name: str
    lhs: float
    rhs: float
    satisfied: bool


@dataclass
class BoundReport:
    parameters: dict
    inequalities: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)

    def add(self, name, lhs, rhs):
        self.inequalities.append(Inequality(name, float(lhs), float(rhs), bool(lhs >= rhs)))

    def inequality(self, name):
        for ineq in self.inequalities:
            if ineq.name == name:
                return ineq
        raise KeyError(name)

    def as_rows(self):
        rows = []
        for ineq in self.inequalities:
            rows.append({"inequality": ineq.name, "lhs": ineq.lhs, "rhs": ineq.rhs, "satisfied": ineq.satisfied})
        return rows


class ScanResult(NamedTuple):
    m: int | None
    previous: int | None
    previous_fails: bool


def minimal_integer(pred: Callable[[int], bool], start=1, cap=SCAN_CAP):
    """Smallest integer ``m >= start`` with ``pred(m)`` for a monotone predicate.

    Doubles until ``pred`` holds, then bisects.  Returns ``ScanResult(None, ...)``
    if nothing up to ``cap`` qualifies.  ``previous`` is ``m - 1`` (or ``None``
    when ``m == start``) and ``previous_fails`` certifies minimality.
    """
    if pred(start):
        return ScanResult(start, None, True)
    lo, hi = start, start * 2
    while not pred(hi):
        lo, hi = hi, hi * 2
        if hi > cap:
            return ScanResult(None, None, True)
    # invariant: pred(lo) false, pred(hi) true
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return ScanResult(hi, hi - 1, not pred(hi - 1))


def _record(report, key, scan):
    report.derived[key] = scan.m
    report.derived[key + "_previous"] = scan.previous
    report.derived[key + "_previous_fails"] = scan.previous_fails


def det_space_bound_cellsample(n, w, t, phi_v):
    """Smallest ``m`` with ``(8 m w t / n)^t >= Phi_v``; also the constant-free form."""
    _positive(n=n, w=w, t=t, phi_v=phi_v)
    n_, w_, t_, phi = _q(n), _q(w), int(t), _q(phi_v)
    rep = BoundReport({"n": n, "w": w, "t": t, "phi_v": phi_v})
    with8 = minimal_integer(lambda m: (8 * m * w_ * t_ / n_) ** t_ >= phi)
    plain = minimal_integer(lambda m: (m * w_ * t_ / n_) ** t_ >= phi)
    _record(rep, "m", with8)
    _record(rep, "m_constant_free", plain)
    if with8.m is not None:
        rep.add("cell-sampling (8mwt/n)^t >= Phi_v", (8 * with8.m * w_ * t_ / n_) ** t_, phi)
    if plain.m is not None:
        rep.add("constant-free (mwt/n)^t >= Phi_v", (plain.m * w_ * t_ / n_) ** t_, phi)
    return rep


def det_space_bound_pathsample(n, w, t, phi_v_fn, cap=SCAN_CAP):
    """Smallest ``m`` with ``9 m^t w t / n >= Phi_v(1/m^t)``.

    ``phi_v_fn`` maps a measure ``delta`` (passed as a Fraction) to
    ``Phi_v(delta)``; it must not decrease as ``delta`` shrinks slower than the
    left side grows, which holds whenever the scan is meaningful.
    """
    _positive(n=n, w=w, t=t)
    n_, w_, t_ = _q(n), _q(w), int(t)

    def lhs(m):
        return 9 * Fraction(m) ** t_ * w_ * t_ / n_

    def pred(m):
        return lhs(m) >= _q(phi_v_fn(Fraction(1, m**t_)))

    rep = BoundReport({"n": n, "w": w, "t": t})
    scan = minimal_integer(pred, cap=cap)
    _record(rep, "m", scan)
    if scan.m is not None:
        rep.add("path-sampling 9m^t wt/n >= Phi_v(1/m^t)", lhs(scan.m), _q(phi_v_fn(Fraction(1, scan.m**t_))))
    else:
        rep.derived["unsatisfiable_within_cap"] = cap
    return rep


def rand_space_bound(n, w, t, phi_r_fn, gamma=DEFAULT_GAMMA, cap=SCAN_CAP):
    """Smallest ``m`` for each randomized inequality.

    ``phi_r_fn(delta, gamma)`` returns ``Phi_r``.  The report's ``derived``
    holds ``m_cell`` for ``(m w t^4 / n)^(2t) >= Phi_r(1/m, gamma/t)`` and
    ``m_path`` for ``m^t w / n >= Phi_r(1/m^t, gamma/t)``.
    """
    _positive(n=n, w=w, t=t, gamma=gamma)
    n_, w_, t_ = _q(n), _q(w), int(t)
    g = gamma / t_

    def lhs_cell(m):
        return (Fraction(m) * w_ * t_**4 / n_) ** (2 * t_)

    def lhs_path(m):
        return Fraction(m) ** t_ * w_ / n_

    def rhs_cell(m):
        return _q(phi_r_fn(Fraction(1, m), g))

    def rhs_path(m):
        return _q(phi_r_fn(Fraction(1, m**t_), g))

    rep = BoundReport({"n": n, "w": w, "t": t, "gamma": gamma})
    cell = minimal_integer(lambda m: lhs_cell(m) >= rhs_cell(m), cap=cap)
    path = minimal_integer(lambda m: lhs_path(m) >= rhs_path(m), cap=cap)
    _record(rep, "m_cell", cell)
    _record(rep, "m_path", path)
    if cell.m is not None:
        rep.add("randomized cell (mwt^4/n)^(2t) >= Phi_r(1/m, gamma/t)", lhs_cell(cell.m), rhs_cell(cell.m))
    if path.m is not None:
        rep.add("randomized path m^t w/n >= Phi_r(1/m^t, gamma/t)", lhs_path(path.m), rhs_path(path.m))
    return rep


class UpdateBound(NamedTuple):
    headline: float
    gamma_form: float


def dynamic_update_bound(t, tau, phi_r, gamma=1.0):
    """Lower bound on the update time of a low-contention ``t``-probe structure.

    ``phi_r`` is the robust expansion at measure ``tau``.  ``headline`` is
    ``phi_r / (32 t^4)``; ``gamma_form`` is ``phi_r * gamma^3 / (32 t^4)``, the
    explicit constant the argument produces when ``phi_r`` is evaluated at
    coverage ``gamma^2 / (4 t^2)``.
    """
    _positive(t=t, tau=tau)
    if phi_r < 0:
        raise ValueError("phi_r must be nonnegative")
    denom = 32.0 * float(t) ** 4
    return UpdateBound(phi_r / denom, phi_r * gamma**3 / denom)


def dynamic_coverage(t, gamma=1.0):
    """Coverage level ``gamma^2 / (4 t^2)`` at which the update bound's Phi_r is taken."""
    return gamma * gamma / (4.0 * t * t)
