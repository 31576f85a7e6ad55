import json

import numpy as np
import pytest

from rehomog.config import ConfigError, RunConfig, config_from_dict, load_config, validate_config
from rehomog.pipeline import (load_cells, read_records_csv, run_pipeline, save_cells)

SMALL = {
    "coefficient": {"name": "trig_product", "params": {"dim": 1}},
    "coupling": {"gamma": 2.0, "epsilons": [0.25, 0.125, 0.0625]},
    "cell": {"n": 256, "n_y": 16, "method": "direct"},
    "mesh": {"per_delta": 16},
    "acceptance": {"slopes": {"l2_error": [0.8, 1.2]}},
}

TOML = """
[coefficient]
name = "trig_product"
params = { dim = 1 }

[coupling]
gamma = 2.0
epsilons = [0.25, 0.125, 0.0625]

[cell]
n = 256
n_y = 16
method = "direct"

[mesh]
per_delta = 16

[acceptance.slopes]
l2_error = [0.8, 1.2]
"""


def test_toml_and_json_agree(tmp_path):
    (tmp_path / "c.toml").write_text(TOML)
    (tmp_path / "c.json").write_text(json.dumps(SMALL))
    a = load_config(tmp_path / "c.toml")
    b = load_config(tmp_path / "c.json")
    assert a == b
    assert a.digest() == b.digest()
    assert a.mesh_size(2) == 4096


def test_validate_defaults_clean():
    assert validate_config(RunConfig()) == []


def test_validate_gamma():
    v = validate_config(RunConfig(gamma=0.5))
    assert any("delta/eps does not vanish" in x.message for x in v)
    assert all(x.level == "error" for x in v)


def test_validate_order():
    v = validate_config(RunConfig(epsilons=[0.1, 0.2]))
    assert any("not strictly decreasing" in x.message for x in v)


def test_validate_resolution_warning():
    v = validate_config(RunConfig(mesh_m=[64] * 5))
    assert v and all(x.level == "warning" for x in v)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"coefficient": {"name": "x", "colour": 1}})


def test_oracle_needs_1d():
    cfg = config_from_dict({"coefficient": {"name": "modulated_laminate"}})
    assert any("only available in 1D" in v.message for v in validate_config(cfg))


def test_cells_roundtrip(tmp_path, cells_trig1):
    save_cells(cells_trig1, tmp_path / "c.npz")
    c = load_cells(tmp_path / "c.npz")
    np.testing.assert_array_equal(c.a0, cells_trig1.a0)
    np.testing.assert_array_equal(c.M, cells_trig1.M)
    assert c.n_y == cells_trig1.n_y


def test_pipeline_end_to_end(tmp_path):
    cfg = config_from_dict(SMALL)
    report, run_dir, passed = run_pipeline(cfg, tmp_path)
    assert passed
    assert report.fits["l2_error"].slope == pytest.approx(0.99, abs=0.05)
    for name in ("records.csv", "report.json", "rates_l2.svg", "rates_h1.svg", "config.json"):
        assert (run_dir / name).exists()
    assert len(list((run_dir / "cell").glob("*.npz"))) == 1
    recs = read_records_csv(run_dir / "records.csv")
    assert [r.epsilon for r in recs] == cfg.epsilons
    assert "||u_eps - u0||_L2" in (run_dir / "records.csv").read_text().splitlines()[0]
    # frozen first record
    assert recs[0].l2_error == pytest.approx(1.1645e-3, rel=2e-2)

    before = {p: p.read_bytes() for p in run_dir.rglob("*") if p.is_file()}
    run_pipeline(cfg, tmp_path)
    after = {p: p.read_bytes() for p in run_dir.rglob("*") if p.is_file()}
    assert before == after

    fresh = tmp_path / "again"
    _, run2, _ = run_pipeline(cfg, fresh)
    assert (run2 / "records.csv").read_bytes() == (run_dir / "records.csv").read_bytes()


def test_pipeline_rejects_bad_config(tmp_path):
    with pytest.raises(ConfigError):
        run_pipeline(RunConfig(gamma=0.9), tmp_path)


def test_pipeline_constant_coefficient(tmp_path):
    cfg = config_from_dict({"coefficient": {"name": "constant", "params": {"dim": 1, "c": 2.0}},
                            "coupling": {"gamma": 2.0, "epsilons": [0.25, 0.125, 0.0625]},
                            "cell": {"n": 16, "n_y": 4}, "mesh": {"m": 512},
                            "acceptance": {"slopes": {}}})
    report, run_dir, passed = run_pipeline(cfg, tmp_path)
    assert all(r.l2_error < 1e-5 and r.h1_error < 1e-4 for r in report.records)
    assert report.fits["k_norm"].noise_floor


def test_pipeline_threads(tmp_path, monkeypatch):
    monkeypatch.setenv("HOMOG_THREADS", "3")
    cfg = config_from_dict(SMALL)
    _, run_dir, _ = run_pipeline(cfg, tmp_path / "t")
    monkeypatch.setenv("HOMOG_THREADS", "1")
    _, run1, _ = run_pipeline(cfg, tmp_path / "s")
    assert (run_dir / "records.csv").read_bytes() == (run1 / "records.csv").read_bytes()
