"""Command-line experiment harness.

Usage::

    nnsexpansion <verb> [--config FILE] [--set key=value ...] [--seed N]
                        [--out PATH] [--format csv|json]

The config is an INI file with sections ``[experiment]``, ``[instance]``,
``[params]`` and ``[output]``; ``--set`` assigns ``params`` entries (or
``instance.key=value``) from the command line.  Numbers may be written as
fractions (``5/16``) or powers (``2^20``).  ``sweep`` needs exactly one
ranged parameter, written ``a,b,c`` or ``lo..hi`` (integers) or
``lo..hi*2`` (doubling).

Exit codes: 0 success, 2 configuration error, 3 exact mode infeasible.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import itertools
import json
import math
import platform
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from . import analytic_bounds as ab
from . import cellprobe as cp
from . import expansion as ex
from . import gns
from . import shattering as sh
from ._util import InfeasibleExactMode, NoAdmissibleSet
from .metric_graphs import (
    PointMeasure,
    build_hypercube_ball_graph,
    build_linfty_graph,
    build_linfty_measure,
    build_noise_distribution,
    complete_bipartite_graph,
)

VERBS = ("expansion", "bounds", "shatter", "gns-sim", "sample-decode", "dynamic", "sweep")

SECTION_KEYS = {
    "experiment": {"name", "seed"},
    "instance": {"kind", "d", "r", "rho", "side", "size"},
    "params": {
        "n", "m", "w", "t", "s", "K", "gamma", "delta", "beta", "cap", "trials", "tau",
        "phi", "phi_exponent", "inequality", "quantity", "samples", "k_grid", "mode",
        "partitions", "queries", "seeds", "inserts", "a", "coverage",
    },
    "output": {"path", "format"},
}

EXACT, ANALYTIC, MONTE_CARLO = "exact", "analytic", "monte-carlo"
ROW_COLUMNS = ("experiment", "metric", "value", "half_width", "mode", "params")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


def parse_number(text):
    """``3``, ``0.25``, ``5/16`` or ``2^20``; integers stay ints."""
    s = str(text).strip()
    try:
        if "^" in s:
            base, exp = s.split("^")
            v = Fraction(parse_number(base)) ** int(exp)
            return int(v) if v.denominator == 1 else float(v)
        if "/" in s:
            return float(Fraction(s))
        if s.lstrip("-").isdigit():
            return int(s)
        return float(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def parse_grid(text):
    """Values of a ranged parameter, or ``None`` if ``text`` is a single value."""
    s = str(text).strip()
    if ".." in s:
        lo, hi = s.split("..")
        factor = None
        if "*" in hi:
            hi, factor = hi.split("*")
        lo, hi = parse_number(lo), parse_number(hi)
        if not (isinstance(lo, int) and isinstance(hi, int)):
            raise ConfigError(f"range bounds must be integers: {text!r}")
        if factor is None:
            return list(range(lo, hi + 1))
        factor = parse_number(factor)
        if not (isinstance(factor, int) and factor >= 2 and lo >= 1):
            raise ConfigError(f"bad geometric range: {text!r}")
        out, v = [], lo
        while v <= hi:
            out.append(v)
            v *= factor
        return out
    if "," in s:
        return [parse_number(v) for v in s.split(",") if v.strip()]
    return None


_TEXT_KEYS = {"kind", "inequality", "quantity", "mode", "name", "path", "format", "k_grid"}


class Config:
    def __init__(self, sections):
        self.sections = sections

    @classmethod
    def from_sources(cls, path=None, overrides=()):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    parser.read_file(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            except configparser.Error as exc:
                raise ConfigError(f"malformed config: {exc}") from exc
        sections = {name: {} for name in SECTION_KEYS}
        for name in parser.sections():
            if name not in SECTION_KEYS:
                raise ConfigError(f"unknown section [{name}]")
            for key, value in parser.items(name):
                sections[name][key] = value
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, value = item.split("=", 1)
            section, _, key = key.rpartition(".")
            sections.setdefault(section or "params", {})[key.strip()] = value.strip()
        for name, entries in sections.items():
            if name not in SECTION_KEYS:
                raise ConfigError(f"unknown section [{name}]")
            for key in entries:
                if key not in SECTION_KEYS[name]:
                    raise ConfigError(f"unknown key '{key}' in [{name}]")
        return cls(sections)

    def get(self, section, key, default=None):
        raw = self.sections[section].get(key)
        if raw is None:
            return default
        if key in _TEXT_KEYS:
            return raw
        if parse_grid(raw) is not None:
            raise ConfigError(f"'{key}' is ranged; only sweep accepts ranges")
        return parse_number(raw)

    def require(self, section, key):
        v = self.get(section, key)
        if v is None:
            raise ConfigError(f"missing required key '{key}' in [{section}]")
        return v

    def ranged(self):
        out = []
        for section in ("instance", "params"):
            for key, raw in self.sections[section].items():
                if key not in _TEXT_KEYS and parse_grid(raw) is not None:
                    out.append((section, key, parse_grid(raw)))
        return out

    def with_value(self, section, key, value):
        sections = {k: dict(v) for k, v in self.sections.items()}
        sections[section][key] = str(value)
        return Config(sections)

    def resolved(self):
        return {k: dict(sorted(v.items())) for k, v in sorted(self.sections.items()) if v}


# --------------------------------------------------------------------------
# instances
# --------------------------------------------------------------------------


def _instance_graph(cfg):
    kind = cfg.get("instance", "kind", "hypercube")
    if kind == "hypercube":
        d, r = cfg.require("instance", "d"), cfg.require("instance", "r")
        G = build_hypercube_ball_graph(d, r)
        u = PointMeasure.uniform(G.domain_V)
        return G, u, u
    if kind == "complete-bipartite":
        size = cfg.require("instance", "size")
        G = complete_bipartite_graph(size, size)
        u = PointMeasure.uniform(G.domain_V)
        return G, u, u
    if kind == "linfty":
        side, d, rho = cfg.require("instance", "side"), cfg.require("instance", "d"), cfg.require("instance", "rho")
        G = build_linfty_graph(side, d)
        mu = build_linfty_measure(side, d, rho)
        return G, mu, mu
    raise ConfigError(f"instance kind '{kind}' has no graph form")


def _noise(cfg):
    kind = cfg.get("instance", "kind", "noise")
    d = cfg.require("instance", "d")
    if kind == "noise":
        return build_noise_distribution(d, cfg.require("instance", "rho"))
    if kind == "hypercube":
        return gns.noise_for_radius(d, cfg.require("instance", "r"))
    raise ConfigError(f"instance kind '{kind}' has no noise form")


# --------------------------------------------------------------------------
# experiments; each returns a list of row dicts
# --------------------------------------------------------------------------


def _row(name, metric, value, mode, half_width="", **extra):
    row = {"experiment": name, "metric": metric, "value": value, "half_width": half_width, "mode": mode}
    row.update(extra)
    return row


def run_expansion(cfg, seed):
    quantity = cfg.get("params", "quantity", "vertex")
    mode = cfg.get("params", "mode", "auto")
    if quantity == "vertex-global":
        raw = cfg.require("params", "k_grid")
        grid = parse_grid(raw) or [parse_number(raw)]
        G, mu, nu = _instance_graph(cfg)
        return [_row("expansion", "vertex_expansion_global", ex.vertex_expansion_global(G, mu, nu, grid), EXACT)]
    delta = cfg.require("params", "delta")
    if quantity == "vertex":
        G, mu, nu = _instance_graph(cfg)
        res = ex.vertex_expansion_at(G, mu, nu, delta, mode=mode, seed=seed)
    elif quantity == "edge":
        res = ex.edge_expansion_at(_noise(cfg), delta, mode=mode, seed=seed)
    elif quantity == "robust":
        gamma = cfg.require("params", "gamma")
        res = ex.robust_expansion_at(_noise(cfg), delta, gamma, mode=mode, seed=seed)
    else:
        raise ConfigError(f"unknown quantity '{quantity}'")
    rows = [_row("expansion", f"{quantity}_expansion", res.value, res.mode)]
    if not res.is_exact:
        rows.append(_row("expansion", "lower_bound", res.lower, ANALYTIC))
        rows.append(_row("expansion", "upper_bound", res.upper, res.mode))
    return rows


def _phi_fn(cfg):
    phi = cfg.get("params", "phi")
    expo = cfg.get("params", "phi_exponent")
    if (phi is None) == (expo is None):
        raise ConfigError("give exactly one of 'phi' (constant) or 'phi_exponent' (phi = delta^-a)")
    if phi is not None:
        return lambda delta, *_: phi
    return lambda delta, *_: float(delta) ** (-expo)


def _hypercontractive_rows(cfg):
    d, rho = cfg.require("instance", "d"), cfg.require("instance", "rho")
    e = build_noise_distribution(d, rho)
    E = e.dense()
    size = 2**d
    masks = np.arange(1, 2**size, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(size)) & 1).astype(np.float64)
    self_mass = ((member @ E) * member).sum(axis=1)
    a = member.mean(axis=1)
    slack = float(np.max(self_mass - a ** (2.0 / (1.0 + rho))))
    return [
        _row("bounds", "max_violation", slack, EXACT),
        _row("bounds", "satisfied", slack <= 1e-12, EXACT),
    ]


def run_bounds(cfg, seed):
    kind = cfg.require("params", "inequality")
    if kind == "hypercontractive":
        return _hypercontractive_rows(cfg)
    if kind == "harper":
        d, r, a = cfg.require("instance", "d"), cfg.require("instance", "r"), cfg.require("params", "a")
        return [_row("bounds", "neighborhood_lower_bound", float(ab.harper_neighborhood_bound(d, r, a)), ANALYTIC)]
    if kind == "dynamic":
        t, tau, phi = cfg.require("params", "t"), cfg.require("params", "tau"), cfg.require("params", "phi")
        gamma = cfg.get("params", "gamma", 1.0)
        b = ab.dynamic_update_bound(t, tau, phi, gamma)
        return [_row("bounds", "update_lower_bound", b.headline, ANALYTIC), _row("bounds", "update_lower_bound_gamma", b.gamma_form, ANALYTIC)]
    n, w, t = cfg.require("params", "n"), cfg.require("params", "w"), cfg.require("params", "t")
    m_fixed = cfg.get("params", "m")
    if kind == "det-cell":
        phi = cfg.require("params", "phi")
        if m_fixed is not None:
            lhs = (Fraction(8 * m_fixed * w * t) / n) ** t
            return [_row("bounds", "satisfied", bool(lhs >= Fraction(phi)), ANALYTIC, lhs=float(lhs), rhs=phi)]
        rep = ab.det_space_bound_cellsample(n, w, t, phi)
    elif kind == "det-path":
        fn = _phi_fn(cfg)
        if m_fixed is not None:
            lhs = 9 * Fraction(m_fixed) ** t * w * t / n
            rhs = fn(Fraction(1, m_fixed**t))
            return [_row("bounds", "satisfied", bool(lhs >= Fraction(rhs)), ANALYTIC, lhs=float(lhs), rhs=float(rhs))]
        rep = ab.det_space_bound_pathsample(n, w, t, fn)
    elif kind == "rand":
        fn = _phi_fn(cfg)
        gamma = cfg.get("params", "gamma", ab.DEFAULT_GAMMA)
        if m_fixed is not None:
            lhs = (Fraction(m_fixed) * w * t**4 / n) ** (2 * t)
            rhs = fn(Fraction(1, m_fixed), gamma / t)
            lhs2 = Fraction(m_fixed) ** t * w / n
            rhs2 = fn(Fraction(1, m_fixed**t), gamma / t)
            return [
                _row("bounds", "cell_satisfied", bool(lhs >= Fraction(rhs)), ANALYTIC, lhs=float(lhs), rhs=float(rhs)),
                _row("bounds", "path_satisfied", bool(lhs2 >= Fraction(rhs2)), ANALYTIC, lhs=float(lhs2), rhs=float(rhs2)),
            ]
        rep = ab.rand_space_bound(n, w, t, fn, gamma)
    else:
        raise ConfigError(f"unknown inequality '{kind}'")
    rows = [_row("bounds", key, val, ANALYTIC) for key, val in rep.derived.items()]
    for ineq in rep.inequalities:
        rows.append(_row("bounds", ineq.name, ineq.satisfied, ANALYTIC, lhs=ineq.lhs, rhs=ineq.rhs))
    return rows


def run_shatter(cfg, seed):
    e = _noise(cfg)
    _, nu = e.marginals()
    beta, gamma = cfg.require("params", "beta"), cfg.require("params", "gamma")
    samples = cfg.get("params", "samples", 10_000)
    count = cfg.get("params", "partitions", 1)
    K = cfg.get("params", "K")
    rows = []
    if K is None:
        pred = sh.predicted_shattering_scale(e, beta, gamma)
        K = pred.K
        rows.append(_row("shatter", "predicted_K", K, EXACT if pred.phi_mode.startswith("greedy-inner-exact") else ANALYTIC))
    for p in range(count):
        fam = sh.random_sparse_partition(nu, beta, seed=seed * 1_000_003 + p)
        rate = sh.shattering_rate(e, fam, K, gamma, samples, seed=seed * 1_000_003 + p, mode="sample")
        rows.append(_row("shatter", f"rate[{p}]", rate.rate, MONTE_CARLO, rate.half_width))
    return rows


def _table_setup(cfg, seed):
    d, r, n = cfg.require("instance", "d"), cfg.require("instance", "r"), cfg.require("params", "n")
    cap = cfg.get("params", "cap", gns.DEFAULT_CAP)
    coverage = cfg.get("params", "coverage", gns.DEFAULT_COVERAGE)
    e = gns.noise_for_radius(d, r)
    m = cfg.get("params", "m")
    if m is None:
        fp = gns.fixed_point_m(d, r, n, coverage)
        m, base, info = fp.m, fp.base, fp
    else:
        base, info = gns.choose_base_sets_hypercube(d, r, m, coverage), None
    inst = gns.sample_instance(e, n, seed)
    return e, inst, base, m, cap, info


def run_gns_sim(cfg, seed):
    e, inst, base, m, cap, fp = _table_setup(cfg, seed)
    queries = cfg.get("params", "queries", 1000)
    ds = gns.build_translation_structure(inst, base, m, cap, seed)
    ys, idx = gns.sample_queries(inst, e, queries, seed)
    out = ds.answer_all(ys)
    ok = out.answers == inst.bits[idx]
    p = float(ok.mean())
    hw = float(np.sqrt(math.log(2 / 0.01) / (2 * queries)))
    rows = [
        _row("gns-sim", "m", m, EXACT),
        _row("gns-sim", "coverage", base.coverage, EXACT),
        _row("gns-sim", "success_rate", p, MONTE_CARLO, hw),
        _row("gns-sim", "unique_match_rate", float(np.mean(out.matches == 1)), MONTE_CARLO, hw),
        _row("gns-sim", "overflow_cell_fraction", float(np.mean(ds.overflow > 0)), EXACT),
    ]
    if fp is not None:
        rows.insert(1, _row("gns-sim", "fixed_point_load", fp.load, EXACT))
        rows.insert(2, _row("gns-sim", "fixed_point_converged", fp.converged, EXACT))
    return rows


def decode_experiment(d, r, n, gamma, mode, t, seed, m=None, s=None, cap=gns.DEFAULT_CAP, K=None):
    """One seeded end-to-end sampling + decoding run; returns the CSV row dict."""
    e = gns.noise_for_radius(d, r)
    _, nu = e.marginals()
    if m is None:
        fp = gns.fixed_point_m(d, r, n)
        m, base = fp.m, fp.base
    else:
        base = gns.choose_base_sets_hypercube(d, r, m)
    inst = gns.sample_instance(e, n, seed)
    tables = gns.build_multi_translation(inst, base, m, t, cap, seed) if t > 1 else [gns.build_translation_structure(inst, base, m, cap, seed)]
    ds = gns.translation_cell_probe(tables)
    if s is None:
        s = cp.sample_budget(n, t, ds.w, m, gamma).s
    if K is None:
        beta = 1.0 / m**t if mode == "path" else 1.0 / m
        K = sh.predicted_shattering_scale(e, beta, gamma / t).K
    sampler = cp.path_sample if mode == "path" else cp.cell_sample
    sample = sampler(ds, s, nu, seed)
    res = cp.majority_decode(ds, sample, inst, e, K, gamma)
    X = cp.conditional_rows(e, inst.points)
    diag = cp.event_diagnostics(ds, sample, X, nu, K, gamma)
    return cp.experiment_row(seed, sample, d, n, K, gamma, res, diag, inst.bits)


def run_sample_decode(cfg, seed):
    d, r, n = cfg.require("instance", "d"), cfg.require("instance", "r"), cfg.require("params", "n")
    gamma = cfg.get("params", "gamma", 0.05)
    mode = cfg.get("params", "mode", "path")
    if mode not in ("path", "cell"):
        raise ConfigError("mode must be 'path' or 'cell'")
    t = cfg.get("params", "t", 1)
    seeds = cfg.get("params", "seeds", 1)
    rows = []
    for k in range(seeds):
        rows.append(decode_experiment(d, r, n, gamma, mode, t, seed + k, cfg.get("params", "m"), cfg.get("params", "s"), cfg.get("params", "cap", gns.DEFAULT_CAP), cfg.get("params", "K")))
    return rows


def dynamic_experiment(d, r, m, n, inserts, cap, seed):
    """Insert points one at a time and compare cells written with the update bound."""
    e = gns.noise_for_radius(d, r)
    _, nu = e.marginals()
    base = gns.choose_base_sets_hypercube(d, r, m)
    inst = gns.sample_instance(e, n, seed)
    ds = gns.build_translation_structure(inst, base, m, cap, seed)
    tau = cp.contention(ds.as_cell_probe(), nu).tau
    phi = ex.robust_expansion_at(e, tau, ab.dynamic_coverage(1), mode="exact")
    bound = ab.dynamic_update_bound(1, tau, phi.value)
    extra = gns.sample_instance(e, inserts, seed + 1)
    costs = [gns.insert_point(ds, x, b).t_U for x, b in zip(extra.points, extra.bits)]
    return {
        "tau": tau,
        "phi_r": phi.value,
        "bound": bound.headline,
        "mean_t_U": float(np.mean(costs)),
        "min_t_U": int(np.min(costs)),
        "max_t_U": int(np.max(costs)),
    }


def run_dynamic(cfg, seed):
    d, r, m = cfg.require("instance", "d"), cfg.require("instance", "r"), cfg.require("params", "m")
    n = cfg.get("params", "n", 8)
    inserts = cfg.get("params", "inserts", 100)
    cap = cfg.get("params", "cap", gns.DEFAULT_CAP)
    out = dynamic_experiment(d, r, m, n, inserts, cap, seed)
    return [
        _row("dynamic", "contention", out["tau"], EXACT),
        _row("dynamic", "robust_expansion", out["phi_r"], EXACT),
        _row("dynamic", "update_lower_bound", out["bound"], ANALYTIC),
        _row("dynamic", "mean_cells_written", out["mean_t_U"], EXACT),
        _row("dynamic", "bound_respected", out["mean_t_U"] >= out["bound"], EXACT),
    ]


RUNNERS = {
    "expansion": run_expansion,
    "bounds": run_bounds,
    "shatter": run_shatter,
    "gns-sim": run_gns_sim,
    "sample-decode": run_sample_decode,
    "dynamic": run_dynamic,
}


def run_sweep(cfg, seed):
    name = cfg.require("experiment", "name")
    if name not in RUNNERS:
        raise ConfigError(f"cannot sweep unknown experiment '{name}'")
    ranged = cfg.ranged()
    if len(ranged) != 1:
        raise ConfigError(f"sweep needs exactly one ranged parameter, found {len(ranged)}")
    section, key, grid = ranged[0]
    if not grid:
        raise ConfigError(f"ranged parameter '{key}' has an empty grid")
    rows = []
    for value in sorted(grid):
        for row in RUNNERS[name](cfg.with_value(section, key, value), seed):
            row = dict(row)
            row["sweep_key"] = key
            row["sweep_value"] = value
            rows.append(row)
    return rows


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return "" if v is None else str(v)


def _columns(rows, verb):
    if verb == "sample-decode":
        return list(cp.CSV_COLUMNS)
    cols = list(ROW_COLUMNS[:-1])
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    return cols


def to_csv(rows, verb, cfg):
    buf = io.StringIO()
    buf.write(f"# nnsexpansion {__version__}\n")
    buf.write("# config " + json.dumps(cfg.resolved(), sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    cols = _columns(rows, verb)
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in cols])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def to_json(rows, verb, cfg):
    doc = {
        "version": __version__,
        "verb": verb,
        "config": cfg.resolved(),
        "environment": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
        "rows": [{k: _jsonable(v) for k, v in row.items()} for row in rows],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def build_parser():
    p = argparse.ArgumentParser(prog="nnsexpansion", description="Expansion and cell-probe experiments.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", help="INI experiment description")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a [params] entry")
    p.add_argument("--seed", type=int, help="master seed (default: config or 0)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = Config.from_sources(args.config, args.set)
        seed = args.seed if args.seed is not None else cfg.get("experiment", "seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        fmt = args.format or cfg.get("output", "format", "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError(f"unknown format '{fmt}'")
        out_path = args.out or cfg.get("output", "path")
        runner = run_sweep if args.verb == "sweep" else RUNNERS[args.verb]
        if args.verb != "sweep" and cfg.ranged():
            raise ConfigError("ranged parameters are only accepted by sweep")
        rows = runner(cfg, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleExactMode as exc:
        print(f"refusing to downgrade from exact mode: {exc}", file=sys.stderr)
        return 3
    except (NoAdmissibleSet, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    text = (to_json if fmt == "json" else to_csv)(rows, args.verb, cfg)
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
