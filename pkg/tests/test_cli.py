import json
import math

import numpy as np
import pytest

from flatcover import cli
from flatcover.cover import FlatCover
from flatcover.lattice import pell_convergents


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_helpers():
    assert cli._parse_dyadic("2^-6") == 2.0 ** -6
    assert cli._parse_dyadic("2**-6") == 2.0 ** -6
    assert cli._parse_dyadic("0.125") == 0.125
    with pytest.raises(ValueError):
        cli._parse_dyadic("two")
    assert cli._parse_delta_list("2^-4..2^-6") == [2.0 ** -4, 2.0 ** -5, 2.0 ** -6]
    assert cli._parse_delta_list("2^-4,2^-8") == [2.0 ** -4, 2.0 ** -8]
    assert cli._parse_alpha("sqrt2") == pytest.approx(math.sqrt(2.0))
    assert cli._parse_alpha("3/2") == pytest.approx(1.5)
    assert cli._parse_alpha("1.25") == 1.25


def test_cover_build_verify_round_trip(tmp_path, capsys):
    cov_path = tmp_path / "caps.json"
    code, out, _ = run(capsys, "cover", "build", "--kind", "caps",
                       "--delta", "2^-4", "--out", str(cov_path))
    assert code == 0
    cov = FlatCover.from_json_dict(json.loads(cov_path.read_text()))
    assert len(cov) == 16

    code, out, _ = run(capsys, "cover", "verify", "--cover", str(cov_path))
    assert code == 0
    rep = json.loads(out)
    assert rep["ok"] is True
    assert rep["members"] == 16


def test_cover_verify_failure_exits_2(tmp_path, capsys):
    cov_path = tmp_path / "caps.json"
    run(capsys, "cover", "build", "--kind", "caps", "--delta", "2^-4",
        "--out", str(cov_path))
    # certify against a much steeper phase: flatness must fail
    steep = tmp_path / "steep.json"
    steep.write_text(json.dumps({"degree": 2, "coeffs": [[1, 1, 64.0]]}))
    code, out, _ = run(capsys, "cover", "verify", "--cover", str(cov_path),
                       "--phase", str(steep))
    assert code == 2
    assert json.loads(out)["all_flat"] is False


def test_flat_defect_reports_known_value(capsys):
    code, out, _ = run(capsys, "flat", "defect", "--rect",
                       "0", "0", "0.25", "0.25")
    assert code == 0
    rep = json.loads(out)
    assert rep["defect"] == pytest.approx(0.0625)
    assert rep["certified"] is True

    code, out, _ = run(capsys, "flat", "defect", "--rect",
                       "0", "0", "0.25", "0.25", "--delta", "2^-4")
    rep = json.loads(out)
    assert rep["is_flat"] is True


def test_flat_defect_requires_a_box(capsys):
    code, _, err = run(capsys, "flat", "defect")
    assert code == 1


def test_decouple_ratio_line_closed_form(capsys):
    code, out, _ = run(capsys, "decouple", "ratio", "--example", "line",
                       "--delta", "2^-6", "--p", "4", "--cover-kind", "caps")
    assert code == 0
    rep = json.loads(out)
    n = 8
    energy = (2 * n ** 3 + n) / 3.0
    assert rep["exact"] is True
    assert rep["members_used"] == n
    assert rep["ratio"] == pytest.approx((energy / n ** 2) ** 0.25, rel=1e-10)


def test_decouple_sweep_writes_deterministic_csv(tmp_path, capsys):
    csv1 = tmp_path / "a.csv"
    csv2 = tmp_path / "b.csv"
    args = ("decouple", "sweep", "--example", "line", "--deltas", "2^-4..2^-7",
            "--p", "4", "--cover-kind", "caps")
    code, out, _ = run(capsys, *args, "--csv", str(csv1))
    assert code == 0
    rep = json.loads(out)
    assert len(rep["points"]) == 4
    assert rep["slope"] > 0
    run(capsys, *args, "--csv", str(csv2))
    assert csv1.read_bytes() == csv2.read_bytes()
    header = csv1.read_text().splitlines()[0]
    assert header == "delta,ratio,lhs,rhs,members,exact"
    assert len(csv1.read_text().splitlines()) == 5


def test_decouple_sweep_needs_enough_points(capsys):
    code, _, err = run(capsys, "decouple", "sweep", "--example", "line",
                       "--deltas", "2^-4..2^-6", "--p", "4")
    assert code == 1


def test_rescale_check_command(capsys):
    code, out, _ = run(capsys, "rescale", "check", "--delta", "2^-6",
                       "--count", "10", "--seed", "3")
    assert code == 0
    rep = json.loads(out)
    assert rep["ok"] is True
    assert rep["worst_identity_gap"] < 1e-9


def test_lattice_count_against_library(tmp_path, capsys):
    code, out, _ = run(capsys, "lattice", "count", "--phase", "saddle-diag",
                       "--alpha", "sqrt2", "--delta", "2^-4", "--d", "3")
    assert code == 0
    rep = json.loads(out)
    assert rep["max"] <= 3
    assert rep["points"] == 17 * 12
    assert sum(rep["histogram"].values()) == rep["members"]


def test_lattice_pell_csv(tmp_path, capsys):
    csv_path = tmp_path / "pell.csv"
    code, out, _ = run(capsys, "lattice", "pell", "--bmax", "1000",
                       "--eps", "0.1", "--csv", str(csv_path))
    assert code == 0
    rep = json.loads(out)
    assert rep["min_product"] > 0.2
    assert rep["argmin_b"] >= 1
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "b,a,gap,product"
    bs = [int(r.split(",")[0]) for r in rows[1:]]
    assert bs == [b for _, b in pell_convergents(1000)]


def test_reproduce_list_names_all_recipes(capsys):
    code, out, _ = run(capsys, "reproduce", "--list")
    assert code == 0
    lines = [l for l in out.splitlines() if l.strip()]
    assert len(lines) == 10
    assert any("flat-closed-form" in l for l in lines)


def test_reproduce_quick_recipe_passes(capsys):
    code, out, _ = run(capsys, "reproduce", "flat-closed-form", "--quick")
    assert code == 0
    assert "checks passed" in out
    assert "FAIL" not in out


def test_reproduce_unknown_recipe(capsys):
    code, _, err = run(capsys, "reproduce", "nope")
    assert code == 1
    assert "unknown recipe" in err


def test_malformed_cover_json_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    code, _, err = run(capsys, "cover", "verify", "--cover", str(bad))
    assert code == 1
    missing = tmp_path / "missing.json"
    code, _, err = run(capsys, "cover", "verify", "--cover", str(missing))
    assert code == 1


def test_usage_errors_exit_1(capsys):
    assert cli.main(["cover", "build"]) == 1  # missing --delta
    assert cli.main(["decouple", "ratio", "--example", "line"]) == 1
    assert cli.main(["nosuchcommand"]) == 1
