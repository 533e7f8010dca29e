import json

import pytest

from qchydro.config import load_json, parse_config, validate
from qchydro.errors import ConfigError

MINIMAL = {"grid": {"shape": [16, 16]}, "model": "ehrenfest", "integrator": {"dt": 0.01, "t_end": 0.1}}


def _write(tmp_path, text):
    p = tmp_path / "cfg.json"
    p.write_text(text)
    return p


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, json.dumps(MINIMAL)))
    assert cfg.hamiltonian["hbar"] == 1.0 and cfg.hamiltonian["M"] == 1.0
    assert cfg.integrator["deterministic"] is True
    assert cfg.dim == 2 and cfg.seed == 0


def test_planar_model_on_3d_grid_names_both_keys():
    bad = dict(MINIMAL, grid={"shape": [16, 16, 16]}, model="qc_planar")
    with pytest.raises(ConfigError) as exc:
        validate(bad)
    msg = " ".join(exc.value.violations)
    assert "model" in msg and "grid.shape" in msg


def test_duplicate_key_reports_line(tmp_path):
    text = '{\n  "grid": {"shape": [16, 16]},\n  "model": "ehrenfest",\n  "model": "classical"\n}'
    with pytest.raises(ConfigError) as exc:
        parse_config(_write(tmp_path, text))
    assert "line 4" in exc.value.violations[0]


def test_nested_duplicate_key_and_arrays():
    load_json('{"a": [{"x": 1}, {"x": 2}]}')  # same key in sibling objects is fine
    with pytest.raises(ConfigError):
        load_json('{"a": {"x": 1, "x": 2}}')


def test_unknown_keys_and_types_all_reported():
    bad = dict(MINIMAL, bogus=1, integrator={"dt": -1, "t_end": 0})
    with pytest.raises(ConfigError) as exc:
        validate(bad)
    assert len(exc.value.violations) >= 2


def test_nan_literal_rejected():
    with pytest.raises(ConfigError):
        load_json('{"x": NaN}')


def test_invalid_json_reports_position():
    with pytest.raises(ConfigError) as exc:
        load_json('{"x": 1,,}')
    assert "line 1" in exc.value.violations[0]


def test_loops_require_pure_state():
    bad = dict(MINIMAL, diagnostics={"loops": [{"center": [1, 1], "radius": 0.5}]})
    with pytest.raises(ConfigError) as exc:
        validate(bad)
    assert any("pure-state" in v for v in exc.value.violations)


def test_pure_state_planar_requires_pure_mode():
    bad = dict(MINIMAL, model="pure_state_planar", state={"mode": "density-matrix"})
    with pytest.raises(ConfigError):
        validate(bad)


def test_named_setup_fills_state():
    cfg = validate(dict(MINIMAL, model="qc_planar", setup={"name": "dephasing_reference"}))
    assert cfg.state["mode"] == "pure-state"
    assert cfg.hamiltonian["couplings"][0]["matrix"] == "sigma_z"


def test_complex_coupling_matrix():
    cfg = validate(dict(MINIMAL, hamiltonian={"couplings": [{"V": 0.5, "matrix": {"re": [[0, 0], [0, 0]], "im": [[0, -1], [1, 0]]}}]}))
    assert cfg.hamiltonian["couplings"][0]["matrix"]["im"][0][1] == -1


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/cfg.json")
