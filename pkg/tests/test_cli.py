import csv
import io
import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nnsexpansion import __version__
from nnsexpansion.cellprobe import CSV_COLUMNS
from nnsexpansion.cli import ConfigError, main, parse_grid, parse_number


def write_config(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(tmp_path, verb, text="", *extra, fmt="csv"):
    cfg = write_config(tmp_path, text)
    out = tmp_path / f"out.{fmt}"
    code = main([verb, "--config", cfg, "--out", str(out), "--format", fmt, *extra])
    return code, (out.read_text() if out.exists() else "")


def table(text):
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


CUBE_EXPANSION = """
[experiment]
name = cube
[instance]
kind = hypercube
d = 4
r = 1
[params]
quantity = vertex
delta = 5/16
"""

CELL_BOUND = """
[params]
inequality = det-cell
n = 2^20
w = 64
t = 2
phi = 1024
"""


class TestParsing:
    @pytest.mark.parametrize("text,value", [("3", 3), ("0.25", 0.25), ("5/16", 0.3125), ("2^20", 2**20), ("2^-2", 0.25), ("-4", -4)])
    def test_numbers(self, text, value):
        assert parse_number(text) == value

    def test_bad_number(self):
        with pytest.raises(ConfigError):
            parse_number("abc")

    @pytest.mark.parametrize(
        "text,grid", [("1,2,4", [1, 2, 4]), ("3..6", [3, 4, 5, 6]), ("1..16*2", [1, 2, 4, 8, 16]), ("7", None), ("5..3", [])]
    )
    def test_grids(self, text, grid):
        assert parse_grid(text) == grid

    @given(st.integers(1, 1000), st.integers(0, 1000))
    def test_integer_range(self, lo, span):
        assert parse_grid(f"{lo}..{lo + span}") == list(range(lo, lo + span + 1))

    @given(st.fractions(min_value=Fraction(1, 1000), max_value=1000))
    def test_fraction_round_trip(self, q):
        assert parse_number(f"{q.numerator}/{q.denominator}") == pytest.approx(float(q))


class TestVerbs:
    def test_expansion(self, tmp_path):
        code, text = run(tmp_path, "expansion", CUBE_EXPANSION)
        rows = table(text)
        assert code == 0 and float(rows[0]["value"]) == pytest.approx(2.2) and rows[0]["mode"] == "exact"

    def test_expansion_global(self, tmp_path):
        cfg = "[instance]\nkind = complete-bipartite\nsize = 4\n[params]\nquantity = vertex-global\nk_grid = 1,2,3,4\n"
        assert table(run(tmp_path, "expansion", cfg)[1])[0]["value"] == "4"

    def test_bounds(self, tmp_path):
        code, text = run(tmp_path, "bounds", CELL_BOUND)
        rows = {r["metric"]: r for r in table(text)}
        assert code == 0 and rows["m"]["value"] == "32768" and rows["m_previous_fails"]["value"] == "true"

    def test_bounds_rand(self, tmp_path):
        cfg = "[params]\ninequality = rand\nn = 1024\nw = 8\nt = 1\nphi = 16\n"
        rows = {r["metric"]: r for r in table(run(tmp_path, "bounds", cfg)[1])}
        assert rows["m_cell"]["value"] == "512"

    def test_bounds_dynamic(self, tmp_path):
        cfg = "[params]\ninequality = dynamic\nt = 2\ntau = 0.01\nphi = 4096\n"
        rows = {r["metric"]: r for r in table(run(tmp_path, "bounds", cfg)[1])}
        assert float(rows["update_lower_bound"]["value"]) == 8.0

    def test_shatter(self, tmp_path):
        cfg = "[instance]\nkind = noise\nd = 6\nrho = 0.5\n[params]\nbeta = 1/16\ngamma = 0.2\nsamples = 500\npartitions = 2\n"
        code, text = run(tmp_path, "shatter", cfg)
        rows = table(text)
        assert code == 0 and rows[0]["metric"] == "predicted_K"
        for row in rows[1:]:
            assert row["mode"] == "monte-carlo" and float(row["half_width"]) > 0

    def test_gns_sim(self, tmp_path):
        cfg = "[instance]\nd = 10\nr = 2\n[params]\nn = 32\nm = 32\nqueries = 200\n"
        code, text = run(tmp_path, "gns-sim", cfg)
        rows = {r["metric"]: r for r in table(text)}
        assert code == 0 and 0 <= float(rows["success_rate"]["value"]) <= 1
        assert float(rows["success_rate"]["half_width"]) > 0

    def test_sample_decode(self, tmp_path):
        cfg = "[instance]\nd = 8\nr = 2\n[params]\nn = 32\nm = 16\nmode = cell\nseeds = 2\n"
        code, text = run(tmp_path, "sample-decode", cfg)
        rows = table(text)
        assert code == 0 and tuple(rows[0].keys()) == CSV_COLUMNS and len(rows) == 2
        assert [r["seed"] for r in rows] == ["0", "1"]

    def test_dynamic(self, tmp_path):
        cfg = "[instance]\nd = 4\nr = 1\n[params]\nm = 4\nn = 4\ninserts = 20\n"
        rows = {r["metric"]: r for r in table(run(tmp_path, "dynamic", cfg)[1])}
        assert rows["bound_respected"]["value"] == "true"

    def test_set_override(self, tmp_path):
        code, text = run(tmp_path, "expansion", CUBE_EXPANSION, "--set", "delta=1/16")
        assert float(table(text)[0]["value"]) == pytest.approx(5.0)

    def test_stdout(self, tmp_path, capsys):
        assert main(["bounds", "--config", write_config(tmp_path, CELL_BOUND)]) == 0
        assert "32768" in capsys.readouterr().out


class TestReproducibility:
    def test_byte_identical(self, tmp_path):
        cfg = "[instance]\nkind = noise\nd = 6\nrho = 0.5\n[params]\nbeta = 1/16\ngamma = 0.2\nsamples = 300\n"
        a = run(tmp_path, "shatter", cfg, "--seed", "5")[1]
        b = run(tmp_path, "shatter", cfg, "--seed", "5")[1]
        assert a == b

    def test_header_embeds_config(self, tmp_path):
        text = run(tmp_path, "expansion", CUBE_EXPANSION)[1]
        lines = text.splitlines()
        assert lines[0] == f"# nnsexpansion {__version__}"
        cfg = json.loads(lines[1][len("# config ") :])
        assert cfg["params"]["delta"] == "5/16"

    def test_json_mirror(self, tmp_path):
        code, text = run(tmp_path, "expansion", CUBE_EXPANSION, fmt="json")
        doc = json.loads(text)
        assert code == 0 and doc["version"] == __version__ and "numpy" in doc["environment"]
        assert doc["rows"][0]["value"] == pytest.approx(2.2) and doc["rows"][0]["mode"] == "exact"


class TestSweep:
    def test_rand_feasibility_flips_once(self, tmp_path):
        cfg = "[experiment]\nname = bounds\n[params]\ninequality = rand\nn = 1024\nw = 8\nt = 1\nphi = 16\nm = 1..4096*2\n"
        code, text = run(tmp_path, "sweep", cfg)
        rows = [r for r in table(text) if r["metric"] == "cell_satisfied"]
        values = [int(r["sweep_value"]) for r in rows]
        flags = [r["value"] == "true" for r in rows]
        assert code == 0 and values == sorted(values)
        assert sum(a != b for a, b in zip(flags, flags[1:])) == 1
        assert flags[values.index(512)] and not flags[values.index(256)]

    def test_hypercontractive_rho(self, tmp_path):
        cfg = "[experiment]\nname = bounds\n[instance]\nd = 3\nrho = 0.25,0.5,0.75\n[params]\ninequality = hypercontractive\n"
        rows = [r for r in table(run(tmp_path, "sweep", cfg)[1]) if r["metric"] == "satisfied"]
        assert len(rows) == 3 and all(r["value"] == "true" for r in rows)

    def test_empty_grid(self, tmp_path):
        cfg = "[experiment]\nname = bounds\n[params]\ninequality = det-cell\nn = 8\nw = 1\nt = 1\nphi = 1\nm = 5..3\n"
        assert run(tmp_path, "sweep", cfg)[0] == 2

    def test_two_ranges(self, tmp_path):
        cfg = "[experiment]\nname = bounds\n[params]\ninequality = det-cell\nn = 8,16\nw = 1\nt = 1\nphi = 1,2\n"
        assert run(tmp_path, "sweep", cfg)[0] == 2

    def test_range_outside_sweep(self, tmp_path):
        assert run(tmp_path, "bounds", CELL_BOUND.replace("t = 2", "t = 1,2"))[0] == 2


class TestErrors:
    def test_unknown_key(self, tmp_path, capsys):
        assert run(tmp_path, "expansion", CUBE_EXPANSION + "bogus = 1\n")[0] == 2
        assert "bogus" in capsys.readouterr().err

    def test_unknown_section(self, tmp_path):
        assert run(tmp_path, "expansion", CUBE_EXPANSION + "[extra]\nx = 1\n")[0] == 2

    def test_missing_key(self, tmp_path, capsys):
        assert run(tmp_path, "bounds", "[params]\ninequality = det-cell\n")[0] == 2
        assert "'n'" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["bounds", "--config", str(tmp_path / "nope.ini")]) == 2

    def test_exact_refused(self, tmp_path, capsys):
        cfg = "[instance]\nkind = hypercube\nd = 17\nr = 1\n[params]\nquantity = vertex\ndelta = 2^-17\nmode = exact\n"
        assert run(tmp_path, "expansion", cfg)[0] == 3
        assert "exact" in capsys.readouterr().err

    def test_no_admissible(self, tmp_path):
        assert run(tmp_path, "expansion", CUBE_EXPANSION.replace("5/16", "1/32"))[0] == 2
