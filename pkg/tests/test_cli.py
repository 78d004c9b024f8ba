import csv
import io
import json

import pytest

from maxreg.cli import main
from maxreg.methods import bdf_coefficients
from maxreg.regularity import solution_map_norm
from maxreg.spatial import laplacian_1d


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_angles_csv(capsys):
    code, out, _ = run(capsys, "--experiment", "angles")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0] == ["k", "alpha_degrees"] and len(rows) == 7
    assert float(rows[1][1]) == 90.0


def test_stability_json(capsys):
    code, out, _ = run(capsys, "--experiment", "stability", "--method", "gauss", "--stages", "3",
                       "--format", "json")
    rec = json.loads(out)
    assert code == 0
    row = rec[0] if isinstance(rec, list) else rec["rows"][0]
    assert row["is_a_stable"] is True


def test_tableau_rows(capsys):
    code, out, _ = run(capsys, "--experiment", "tableau", "--method", "radau-iia", "--stages", "2")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0] == ["method", "entry", "i", "j", "value"]
    assert len(rows) == 1 + 4 + 2 + 2


def test_bad_method_is_config_error(capsys):
    code, out, err = run(capsys, "--experiment", "stability", "--method", "rk4")
    assert code == 2 and out == ""
    assert json.loads(err)["exit_code"] == 2


def test_bad_flag_is_config_error(capsys):
    code, _, err = run(capsys, "--experiment", "angles", "--nonsense")
    assert code == 2 and json.loads(err)["error"] == "ConfigError"


def test_schema_rejects_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "maxreg", "k": 9}))
    code, _, _ = run(capsys, "--config", str(cfg))
    assert code == 2


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "tableau", "method": "bdf3"}))
    code, out, _ = run(capsys, "--config", str(cfg), "--method", "bdf2")
    assert code == 0 and "BDF2" in out and "BDF3" not in out


def test_single_cell_matches_library(capsys):
    code, out, _ = run(capsys, "--experiment", "maxreg", "--method", "bdf2", "--grid-n", "7",
                       "--n-list", "16", "--tau-list", "2^-4", "--mode", "exact-svd")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[-1][0] == "SUMMARY"
    direct = solution_map_norm(bdf_coefficients(2), laplacian_1d(7), 16, 1 / 16, mode="exact-svd")
    assert float(rows[1][7]) == direct.estimate


def test_numeric_failure_exit_code(capsys):
    code, out, err = run(capsys, "--experiment", "maxreg", "--method", "bdf3", "--grid-n", "4",
                         "--n-list", "2", "--tau-list", "0.1", "--mode", "exact-svd")
    assert code == 3
    assert json.loads(err)["exit_code"] == 3
    assert out.splitlines()[0].startswith("method")


def test_out_file(tmp_path, capsys):
    path = tmp_path / "o.csv"
    code, out, _ = run(capsys, "--experiment", "angles", "--out", str(path))
    assert code == 0 and out == "" and path.read_text().startswith("k,alpha_degrees")


@pytest.mark.parametrize("text", ["1/16", "2^-4", "0.0625"])
def test_tau_syntax(text, capsys):
    code, out, _ = run(capsys, "--experiment", "linfty-log", "--method", "be", "--operator", "scalar",
                       "--value", "-1", "--n-list", "4", "--tau-list", text)
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and float(rows[1][1]) == 0.0625
