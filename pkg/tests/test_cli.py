import csv
import io
import json

import pytest
from click.testing import CliRunner

from bcsif.cli import main, parse_grid, read_config
from bcsif.model import ValidationError


def run(*args, env=None):
    return CliRunner().invoke(main, list(args), env=env or {"BCSIF_CONFIG": ""})


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_gap_zero_below_threshold():
    r = run("gap", "--beta", "1", "--theta", "0", "--U=-1.5")
    assert r.exit_code == 0
    rec = json.loads(r.output)
    assert rec["delta"] == 0
    for key in ("params", "residual", "ssb", "odlro", "free_energy", "window_lower", "window_upper"):
        assert key in rec
    assert rec["params"]["beta"] == 1.0


def test_missing_beta_exit_code():
    r = run("gap", "--U=-1")
    assert r.exit_code == 2
    assert "beta" in r.output


def test_validation_exit_code():
    assert run("gap", "--beta", "1", "--U", "1").exit_code == 2
    assert run("gap", "--beta", "1", "--U=-1", "--theta", "7").exit_code == 2


def test_numerical_exit_code():
    assert run("gap", "--beta", "10", "--U=-3", "--tol", "1e-300").exit_code == 3


def test_gap_deterministic_bytes():
    a = run("gap", "--beta", "10", "--U=-3")
    b = run("gap", "--beta", "10", "--U=-3")
    assert a.exit_code == 0 and a.output == b.output


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nbeta = 10\nU = -3\n")
    r = run("gap", env={"BCSIF_CONFIG": str(cfg)})
    assert json.loads(r.output)["params"]["beta"] == 10.0
    r = run("gap", "--beta", "2", env={"BCSIF_CONFIG": str(cfg)})
    assert json.loads(r.output)["params"]["beta"] == 2.0
    cfg.write_text("betta = 1\n")
    assert run("gap", env={"BCSIF_CONFIG": str(cfg)}).exit_code == 2


def test_read_config_rejects_garbage(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("beta 1\n")
    with pytest.raises(ValidationError):
        read_config(str(f))


def test_parse_grid():
    assert parse_grid("0:1:3") == [0.0, 0.5, 1.0]
    assert parse_grid("1,2.5") == [1.0, 2.5]
    with pytest.raises(ValidationError):
        parse_grid("1:2")


def test_phase_unsolvable_region():
    r = run("phase", "--beta", "1", "--theta-grid", "0:3.14:4", "--U-grid=-0.1:-1.9:4")
    assert r.exit_code == 0
    table = rows(r.output)
    assert len(table) == 16
    assert list(table[0]) == ["theta", "U", "Theta", "window_lower", "window_upper", "in_window", "delta", "ssb",
                              "odlro", "free_energy"]
    assert all(float(row["delta"]) == 0 for row in table)


def test_phase_delta_monotone_in_coupling():
    r = run("phase", "--beta", "10", "--theta-grid", "0", "--U-grid=-1:-4:7")
    deltas = [float(row["delta"]) for row in rows(r.output)]
    assert all(b >= a for a, b in zip(deltas, deltas[1:]))


def test_phase_window_grid_has_superconducting_row():
    r = run("phase", "--beta", "1", "--theta-grid", "6.26:6.28:5", "--U-grid=-0.005:-0.03:5")
    table = rows(r.output)
    assert any(row["in_window"] == "true" and float(row["delta"]) > 0 for row in table)


def test_phase_order_independent_of_workers(tmp_path):
    args = ["phase", "--beta", "1", "--theta-grid", "5:6.2:3", "--U-grid=-0.5:-3:3"]
    a = run(*args)
    b = run(*args, "--workers", "3")
    assert a.output == b.output


def test_potential_table():
    r = run("potential", "--beta", "1", "--U=-1", "--gamma", "0.3")
    assert r.exit_code == 0
    table = rows(r.output)
    errs = [float(row["abs_err_a"]) for row in table]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert errs[1] < errs[0]
    assert all(float(row["F_L_sym_diff"]) == 0 for row in table)
    assert all(abs(float(row["hess_identity_residual"])) < 1e-6 for row in table)


def test_potential_curves():
    r = run("potential", "--beta", "1", "--U=-1", "--L-list", "8,16", "--curve-points", "5")
    assert len(rows(r.output)) == 10


def test_covariance_dump(tmp_path):
    out = tmp_path / "c.csv"
    r = run("--out", str(out), "covariance", "--beta", "1", "--L", "2", "--phi-re", "0.3")
    assert r.exit_code == 0
    table = rows(out.read_text())
    assert list(table[0])[:5] == ["band1", "band2", "x1", "s", "t"]
    assert len(table) == 4 * 2 * 4 * 4


def test_verify_traces():
    r = run("verify", "--suite", "traces")
    assert r.exit_code == 0
    recs = json.loads(r.output)
    assert any("L=1" in x["check"] for x in recs) and any("L=2" in x["check"] for x in recs)
    assert all(x["pass"] for x in recs)
    assert set(recs[0]) == {"check", "lhs", "rhs", "abs_err", "rel_err", "tol", "pass"}


def test_verify_detbound():
    r = run("verify", "--suite", "detbound", "--fuzz-trials", "1000")
    assert r.exit_code == 0
    assert all(x["lhs"] == 0 for x in json.loads(r.output))


@pytest.mark.slow
def test_verify_all_defaults():
    assert run("verify").exit_code == 0
