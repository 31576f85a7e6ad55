import csv
import json
import subprocess
import sys

import pytest

from rehomog.cli import main

from test_pipeline import SMALL


def test_cell_csv(tmp_path):
    out = tmp_path / "cell.csv"
    assert main(["cell", "--coef", "laminate", "--dim", "2", "--n", "32", "--n-y", "2",
                 "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][:3] == ["kind", "y1", "y2"]
    a0 = [float(v) for v in rows[-1][3:]]
    assert a0[0] == pytest.approx(3 ** 0.5, abs=1e-3) and a0[3] == pytest.approx(2.0)


def test_solve(tmp_path):
    assert main(["solve", "--coef", "trig_product", "--dim", "1", "--epsilon", "0.25",
                 "--mesh", "512", "--out", str(tmp_path)]) == 0
    norms = json.loads((tmp_path / "norms.json").read_text())
    assert abs(norms["mean"]) < 1e-12
    assert norms["under_resolved"] is False
    assert len((tmp_path / "u_eps.csv").read_text().splitlines()) == 514


def test_approx(tmp_path):
    assert main(["approx", "--coef", "trig_product", "--dim", "1", "--epsilon", "0.25",
                 "--mesh", "512", "--n", "128", "--n-y", "8", "--out", str(tmp_path)]) == 0
    header = (tmp_path / "approx.csv").read_text().splitlines()[0]
    assert header == "x1,u0,K1,K2,v_hat"
    assert json.loads((tmp_path / "approx.json").read_text())["quad_change"] < 0.01


def test_sweep_and_report(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    d = json.loads(json.dumps(SMALL))
    d["output"] = {"fields": True}
    cfg.write_text(json.dumps(d))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    run = next((tmp_path / "o").iterdir())
    assert (run / "fields" / "eps_0" / "fields.csv").exists()
    assert main(["report", "--records", str(run / "records.csv"), "--out", str(tmp_path / "r"),
                 "--l2-range", "0.9", "1.1"]) == 0
    assert (tmp_path / "r" / "rates_h1.svg").read_text().startswith("<svg")
    # an impossible band fails with exit code 1
    assert main(["report", "--records", str(run / "records.csv"), "--out", str(tmp_path / "r2"),
                 "--h1-range", "0.4", "0.65"]) == 1


def test_config_error_exit(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"coupling": {"gamma": 0.5}}))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["check", "--config", str(cfg)]) == 2
    assert main(["sweep", "--config", str(tmp_path / "missing.toml")]) == 2
    (tmp_path / "broken.toml").write_text("[coupling\n")
    assert main(["sweep", "--config", str(tmp_path / "broken.toml")]) == 2


def test_solver_error_exit(tmp_path):
    cfg = tmp_path / "c.json"
    d = json.loads(json.dumps(SMALL))
    d["solve"] = {"rhs": "cos11"}  # 2D mode on a 1D mesh
    cfg.write_text(json.dumps(d))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 3


def test_check_catalog(capsys):
    assert main(["check", "--samples", "200"]) == 0
    assert "PASS nonsymmetric" in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "rehomog", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "sweep" in out.stdout
