import json
import struct
from pathlib import Path

import numpy as np
import pytest

from disordered_rhf import io
from disordered_rhf.cli import main
from disordered_rhf.spectral import GridField, GridSpec

ROOT = Path(__file__).resolve().parents[1]
FREE_GAS = ROOT / "configs" / "free_gas.json"
BENCH = ROOT / "configs" / "disordered_1d.json"


def run(*args):
    return main([str(a) for a in args])


def tree_bytes(root: Path, skip=("timing.csv",)):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file() and p.name not in skip}


def test_sample_outputs_and_determinism(tmp_path):
    assert run("sample", "-c", BENCH, "-o", tmp_path / "a", "--seed", 2) == 0
    assert run("sample", "-c", BENCH, "-o", tmp_path / "b", "--seed", 2) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    meta = json.loads((tmp_path / "a" / "seed_2" / "sample.json").read_text())
    assert meta["mean_charge_law"] == 1.5
    mu = io.read_field(tmp_path / "a" / "seed_2" / "mu.bin")
    assert mu.grid == GridSpec(1, 8, 32)


def test_zero_charge_sample(tmp_path):
    code = run("sample", "-o", tmp_path, "--set", "disorder.charges=[[0, 1]]")
    assert code == 0
    assert np.all(io.read_field(tmp_path / "seed_0" / "mu.bin").values == 0)


def test_free_gas_solve(tmp_path):
    assert run("solve", "-c", FREE_GAS, "-o", tmp_path) == 0
    result = json.loads((tmp_path / "seed_0" / "result.json").read_text())
    # finite box of side 4 holding 4 electrons: kinetic trace per volume 3 pi^2 / 8
    assert 2 * result["energy"]["kinetic_per_vol"] == pytest.approx(3 * np.pi**2 / 8, rel=1e-10)
    assert abs(result["energy"]["interaction_per_vol"]) < 1e-10
    assert result["converged"]
    assert (tmp_path / "seed_0" / "history.csv").read_text().startswith("iteration,residual\n")


def test_solve_rerun_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("solve", "-c", BENCH, "-o", tmp_path / name, "--seed", 1) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_empty_state_below_spectrum(tmp_path):
    code = run("solve", "-o", tmp_path, "--set", "disorder.charges=[[0, 1]]", "--set", "fill.mode=fermi",
               "--set", "fill.value=-1")
    assert code == 0
    result = json.loads((tmp_path / "seed_0" / "result.json").read_text())
    assert result["electrons"] == 0 and result["energy"]["energy_per_vol"] == 0


def test_non_convergence_exit_code(tmp_path):
    assert run("solve", "-c", BENCH, "-o", tmp_path, "--set", "solver.max_iter=2", "--set", "solver.tol=1e-14") == 3


def test_config_errors_exit_before_compute(tmp_path):
    assert run("solve", "-c", BENCH, "-o", tmp_path, "--set", "grid.bogus=1") == 2
    assert not tmp_path.exists() or not any(tmp_path.iterdir())
    assert run("solve", "-c", tmp_path / "missing.json") == 4


def test_sweeps_write_tables(tmp_path):
    code = run("sweep-l", "-c", BENCH, "-o", tmp_path / "l", "--set", "grid.N=16", "--set", "grid.L_values=[4, 8]",
               "--set", "fill.mode=fermi", "--set", "fill.value=3.0")
    assert code in (0, 1)
    for name in ("runs.csv", "aggregate.csv", "summary.json", "timing.csv"):
        assert (tmp_path / "l" / name).exists()
    code = run("sweep-m", "-c", BENCH, "-o", tmp_path / "m", "--set", "grid.N=16", "--seed", 0)
    assert code == 0
    rows = io.read_csv(tmp_path / "m" / "runs.csv")
    assert sorted(float(r["m"]) for r in rows) == [0.0, 0.1, 0.25, 0.5, 1.0, 2.0]


def test_verify_all_pass_and_empty_selection(tmp_path):
    assert run("verify", "-c", BENCH, "-o", tmp_path / "v", "--seed", 0) == 0
    summary = io.read_csv(tmp_path / "v" / "summary.csv")
    assert {r["check"] for r in summary} == {
        "hoffmann_ostenhof", "lieb_thirring", "self_consistency", "spectral_projection", "representability"
    }
    assert all(r["status"] == "pass" for r in summary)
    assert (tmp_path / "v" / "lieb_thirring.json").exists()
    assert run("verify", "-c", BENCH, "-o", tmp_path / "e", "--set", "verify.checks=[]") == 0


def test_verify_rejects_bad_occupation(tmp_path):
    assert run("solve", "-c", BENCH, "-o", tmp_path / "s", "--seed", 0) == 0
    raw = bytearray((tmp_path / "s" / "seed_0" / "state.bin").read_bytes())
    raw[32:40] = struct.pack("<d", 1.5)
    (tmp_path / "bad.bin").write_bytes(bytes(raw))
    assert run("verify", "-o", tmp_path / "v", "--set", f"verify.state={tmp_path / 'bad.bin'}") == 2
    good = tmp_path / "s" / "seed_0" / "state.bin"
    assert run("verify", "-o", tmp_path / "g", "--set", f"verify.state={good}") == 0


def test_represent_command(tmp_path):
    assert run("solve", "-c", BENCH, "-o", tmp_path / "s", "--seed", 0) == 0
    density = tmp_path / "s" / "seed_0" / "density.bin"
    assert run("represent", "-o", tmp_path / "r", "--set", f"represent.input={density}") == 0
    summary = json.loads((tmp_path / "r" / "represent.json").read_text())
    assert summary["reconstruction_error"] < 1e-8
    lo, hi = summary["occupation_range"]
    assert 0 <= lo <= hi <= 1


def test_represent_errors(tmp_path):
    g1 = GridSpec(1, 2, 8)
    io.write_field(tmp_path / "zero.bin", GridField.zeros(g1))
    assert run("represent", "-o", tmp_path / "z", "--set", f"represent.input={tmp_path / 'zero.bin'}") == 0
    assert json.loads((tmp_path / "z" / "represent.json").read_text())["n_orbitals"] == 0
    io.write_field(tmp_path / "neg.bin", GridField.constant(g1, -1.0))
    assert run("represent", "-o", tmp_path / "n", "--set", f"represent.input={tmp_path / 'neg.bin'}") == 2
    io.write_field(tmp_path / "d3.bin", GridField.constant(GridSpec(3, 1, 4), 1.0))
    assert run("represent", "-o", tmp_path / "d", "--set", f"represent.input={tmp_path / 'd3.bin'}") == 2
    assert run("represent", "-o", tmp_path / "m", "--set", f"represent.input={tmp_path / 'missing.bin'}") == 4
    assert run("represent", "-o", tmp_path / "x") == 2


def test_run_dispatches_on_experiment(tmp_path):
    assert run("run", "-c", ROOT / "configs" / "sample_1d.json", "-o", tmp_path / "s", "--seed", 0) == 0
    assert (tmp_path / "s" / "seed_0" / "mu.bin").exists()
    assert run("run", "-o", tmp_path / "x") == 2
    assert run("run", "-o", tmp_path / "y", "--set", "experiment=bogus") == 2
