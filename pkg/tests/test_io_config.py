import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disordered_rhf import io
from disordered_rhf.config import ConfigError, build_config, load_config, parse_override
from disordered_rhf.scf import DensityMatrix
from disordered_rhf.spectral import GridField, GridSpec


def test_field_round_trip(tmp_path, rng):
    g = GridSpec(2, 2, 4)
    f = GridField(g, rng.normal(size=g.shape))
    io.write_field(tmp_path / "f.bin", f)
    back = io.read_field(tmp_path / "f.bin")
    assert back.grid == g and np.array_equal(back.values, f.values)
    raw = (tmp_path / "f.bin").read_bytes()
    assert raw[:24] == np.array([2, 2, 4], dtype="<i8").tobytes()


def test_truncated_field_rejected(tmp_path):
    (tmp_path / "f.bin").write_bytes(np.array([1, 2, 4], dtype="<i8").tobytes() + b"\0" * 8)
    with pytest.raises(ValueError):
        io.read_field(tmp_path / "f.bin")


def test_state_round_trip(tmp_path, rng):
    g = GridSpec(1, 2, 8)
    orbs = rng.normal(size=(3, g.n)) + 1j * rng.normal(size=(3, g.n))
    dm = DensityMatrix(g, orbs, [1.0, 0.5, 0.25], [0, 1, 1])
    io.write_state(tmp_path / "s.bin", dm)
    back = io.read_state(tmp_path / "s.bin")
    assert np.array_equal(back.orbitals, dm.orbitals)
    assert np.array_equal(back.occupations, dm.occupations)
    assert np.array_equal(back.family, dm.family)


@settings(max_examples=100)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_seventeen_digit_format_round_trips(x):
    assert float(io.fmt(x)) == x


def test_csv_and_json(tmp_path):
    io.write_csv(tmp_path / "t.csv", ("a", "b"), [(1, 0.1), (True, 2.5)])
    assert (tmp_path / "t.csv").read_text() == "a,b\n1,0.10000000000000001\n1,2.5\n"
    io.write_json(tmp_path / "t.json", {"b": np.float64(1.5), "a": np.arange(2)})
    assert json.loads((tmp_path / "t.json").read_text()) == {"a": [0, 1], "b": 1.5}


def test_defaults_are_valid():
    cfg = build_config()
    assert cfg.L == 4 and cfg.options.tol == 1e-8 and cfg.seeds == (0,)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        build_config({"grid": {"L": 4, "bogus": 1}})
    with pytest.raises(ConfigError, match="unknown"):
        build_config({"extra": 1})
    with pytest.raises(ConfigError):
        build_config({"solver": {"alpha": 2.0}})
    with pytest.raises(ConfigError):
        build_config({"grid": {"N": 7}})
    with pytest.raises(ConfigError):
        build_config({"verify": {"checks": ["nope"]}})


def test_override_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"grid": {"L": 8}, "seeds": {"start": 3, "count": 2}}))
    cfg = load_config(path)
    assert cfg.L == 8 and cfg.seeds == (3, 4)
    cfg = load_config(path, ["grid.L=16", "seeds=[7]", "fill.mode=fermi", "fill.value=2.5"])
    assert cfg.L == 16 and cfg.seeds == (7,) and cfg.fill.value == 2.5


def test_parse_override():
    assert parse_override("a.b=3") == (["a", "b"], 3)
    assert parse_override("output=out/x") == (["output"], "out/x")
    with pytest.raises(ConfigError):
        parse_override("novalue")


def test_bad_json_file(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")
