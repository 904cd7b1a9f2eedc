import json

import numpy as np
import pytest

from refsde.cli import main, parse_config, run
from refsde.errors import ConfigError


def base_config(**overrides):
    cfg = {
        "domain": {"type": "halfline", "lower": 0.0},
        "coefficients": {"name": "ou1d", "kappa": 1.0, "sigma0": 1.0},
        "x0": [0.0],
        "horizon_T": 1.0,
        "log2_fine_steps": 8,
        "master_seed": 12345,
        "num_paths": 24,
        "n_list": [4, 8, 16, 32],
        "scheme": "splitting",
        "p_list": [2],
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


# -- config validation -----------------------------------------------------------

def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        parse_config(base_config(extra_knob=1), "dist-rate")
    with pytest.raises(ConfigError, match="unknown config keys"):
        # reference is not a dist-rate key
        parse_config(base_config(reference={"scheme": "projected_euler"}),
                     "dist-rate")


def test_missing_keys_rejected():
    cfg = base_config()
    del cfg["n_list"]
    with pytest.raises(ConfigError, match="missing"):
        parse_config(cfg, "strong-rate")


def test_kind_mismatch_rejected():
    with pytest.raises(ConfigError, match="does not match"):
        parse_config(base_config(kind="dist-rate"), "strong-rate")


def test_x0_outside_rejected():
    with pytest.raises(ConfigError, match="closure"):
        parse_config(base_config(x0=[-0.5]), "dist-rate")


def test_bad_n_list_rejected():
    for bad in ([], [8, 4], [0, 4], [4, 4]):
        with pytest.raises(ConfigError, match="n_list"):
            parse_config(base_config(n_list=bad), "dist-rate")


def test_p_list_range_enforced():
    with pytest.raises(ConfigError, match="p_list"):
        parse_config(base_config(p_list=[9]), "dist-rate")
    with pytest.raises(ConfigError, match="p_list"):
        parse_config(base_config(p_list=[0.5]), "dist-rate")


def test_euler_guard_is_config_error():
    cfg = base_config(scheme="euler", n_list=[4, 512])  # h = 1/256
    with pytest.raises(ConfigError, match="unstable"):
        parse_config(cfg, "dist-rate")


def test_reference_validation():
    cfg = base_config(reference={"scheme": "projected_euler",
                                 "log2_steps": 4})
    with pytest.raises(ConfigError, match="log2_steps"):
        parse_config(cfg, "strong-rate")
    cfg = base_config(reference={"scheme": "halfline_map", "log2_steps": 8})
    with pytest.raises(ConfigError, match="unknown keys in reference"):
        parse_config(cfg, "strong-rate")
    cfg = base_config(domain={"type": "ball", "center": [0.0, 0.0],
                              "radius": 1.0},
                      coefficients={"name": "quadrant2d"},
                      x0=[0.0, 0.0],
                      reference={"scheme": "halfline_map"})
    with pytest.raises(ConfigError, match="half-line"):
        parse_config(cfg, "strong-rate")


def test_coefficient_domain_dimension_mismatch():
    cfg = base_config(coefficients={"name": "quadrant2d"})
    with pytest.raises(ConfigError, match="dimension"):
        parse_config(cfg, "dist-rate")


def test_main_returns_2_on_bad_config(tmp_path, capsys):
    path = write_config(tmp_path, base_config(bogus=1))
    code = main(["dist-rate", "--config", path,
                 "--out", str(tmp_path / "out")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_main_returns_2_on_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["validate", "--config", str(path)]) == 2


def test_main_returns_3_on_blowup(tmp_path, capsys):
    cfg = base_config(coefficients={"name": "ou1d", "kappa": -1e100},
                      x0=[1.0], n_list=[4], num_paths=2)
    path = write_config(tmp_path, cfg)
    with np.errstate(over="ignore", invalid="ignore"):
        code = main(["dist-rate", "--config", path,
                     "--out", str(tmp_path / "out")])
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


# -- experiment runs ----------------------------------------------------------------

def test_validate_run(tmp_path):
    cfg = {
        "domain": {"type": "polyhedron",
                   "normals": [[-1.0, 0.0], [0.0, -1.0]],
                   "offsets": [0.0, 0.0]},
        "coefficients": {"name": "quadrant2d"},
        "x0": [0.0, 0.0],
        "horizon_T": 1.0,
        "log2_fine_steps": 8,
        "master_seed": 7,
        "num_paths": 4,
    }
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["validate", "--config", path, "--out", str(out)]) == 0
    report = json.loads((out / "validation_report.json").read_text())
    assert report["passed"]
    names = {c["name"] for c in report["checks"]}
    assert {"linear_growth", "lipschitz", "projection_idempotent"} <= names
    assert (out / "manifest.json").exists()


def test_dist_rate_artifacts(tmp_path):
    path = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    assert main(["dist-rate", "--config", path, "--out", str(out)]) == 0
    csv = (out / "errors.csv").read_text().splitlines()
    assert csv[0] == "n,num_paths,p,error,stderr"
    assert len(csv) == 5
    assert csv[1].startswith("4,24,2,")
    report = json.loads((out / "rate_report.json").read_text())
    fits = report["per_p"]["2"]["fits"]
    assert set(fits) == {"ln_n_over_n", "inverse_n"}
    manifest = json.loads((out / "manifest.json").read_text())
    import hashlib
    digest = hashlib.sha256((out / "errors.csv").read_bytes()).hexdigest()
    assert manifest["artifacts"]["errors.csv"] == digest


def test_strong_rate_and_weak_artifacts(tmp_path):
    cfg = base_config(reference={"scheme": "projected_euler",
                                 "log2_steps": 8})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "strong"
    assert main(["strong-rate", "--config", path, "--out", str(out)]) == 0
    assert (out / "rate_report.json").exists()

    weak_cfg = base_config(functional="cdf", num_paths=50)
    path2 = write_config(tmp_path, weak_cfg, "weak.json")
    out2 = tmp_path / "weak"
    assert main(["weak-compare", "--config", path2, "--out", str(out2)]) == 0
    lines = (out2 / "errors.csv").read_text().splitlines()
    assert lines[0] == "n,num_paths,functional,value"
    report = json.loads((out2 / "weak_report.json").read_text())
    assert report["functional"] == "cdf"


def test_rerun_is_bitwise_identical(tmp_path):
    path = write_config(tmp_path, base_config(num_paths=16))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["dist-rate", "--config", path, "--out", str(out1)]) == 0
    assert main(["dist-rate", "--config", path, "--out", str(out2)]) == 0
    for name in ("errors.csv", "rate_report.json", "manifest.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_thread_count_does_not_change_outputs(tmp_path):
    path = write_config(tmp_path, base_config(num_paths=16))
    out1, out2 = tmp_path / "t1", tmp_path / "t2"
    assert main(["dist-rate", "--config", path, "--out", str(out1),
                 "--threads", "1"]) == 0
    assert main(["dist-rate", "--config", path, "--out", str(out2),
                 "--threads", "4"]) == 0
    assert (out1 / "errors.csv").read_bytes() == \
        (out2 / "errors.csv").read_bytes()


def test_run_accepts_parsed_config(tmp_path):
    config = parse_config(base_config(num_paths=8), "dist-rate")
    summary = run(config, str(tmp_path / "direct"))
    assert "per_p" in summary
