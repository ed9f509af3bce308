import math

import numpy as np
import pytest

from disordered_rhf import io
from disordered_rhf.disorder import DisorderParams, nuclear_density, sample_realization, shift_realization
from disordered_rhf.experiments import (
    ExperimentRecord,
    FillSpec,
    SweepPlan,
    monotonicity_violations,
    run_tasks,
    summarize,
    sweep_L,
    sweep_m,
    tail_ratio,
    tilde_density,
    tilde_transform,
    _tasks,
)
from disordered_rhf.scf import EnergyBreakdown, SCFOptions
from disordered_rhf.spectral import GridField, GridSpec

CRYSTAL = DisorderParams(1, ((1.0, 1.0),), 0.0, 0.25)


def record(seed, value, converged=True):
    e = EnergyBreakdown(value, 0.0, 1.0, value, 0.0)
    return ExperimentRecord(seed, 4, 1.0, "neutral", e, value, converged, 3, 0.0, 0, 1.0)


def test_fill_spec_resolution():
    g = GridSpec(1, 4, 8)
    mu = GridField.constant(g, 1.5)
    assert FillSpec("neutral").resolve(mu).n_electrons == pytest.approx(6.0)
    assert FillSpec("per_cell", 1).resolve(mu).n_electrons == 4
    assert FillSpec("count", 3).resolve(mu).n_electrons == 3
    assert FillSpec("fermi", 2.5).resolve(mu).fermi_level == 2.5
    with pytest.raises(ValueError):
        FillSpec("fermi")
    with pytest.raises(ValueError):
        FillSpec("grand")


def test_plan_validation(bench_params):
    with pytest.raises(ValueError):
        SweepPlan(bench_params, 16, (4,), (0.0,), (0,), FillSpec("fermi", 1.0))
    with pytest.raises(ValueError):
        SweepPlan(bench_params, 16, (), (1.0,), (0,), FillSpec("neutral"))
    with pytest.raises(ValueError):
        SweepPlan(bench_params, 16, (4,), (1.0,), (), FillSpec("neutral"))


def test_summarize_statistics():
    s = summarize(4, [record(1, 2.0), record(0, 1.0), record(2, 3.0)])
    assert (s.count, s.mean, s.std) == (3, 2.0, 1.0)
    assert s.stderr == pytest.approx(1 / math.sqrt(3))
    bad = summarize(4, [record(0, 1.0), record(1, 2.0, converged=False)])
    assert not bad.complete and math.isnan(bad.mean)


def test_monotonicity_and_tails():
    values = {0.0: 5.0, 0.1: 4.99, 0.5: 4.9, 1.0: 4.7, 2.0: 4.8}
    assert monotonicity_violations(values, 1e-7) == [(1.0, 2.0)]
    near, far = tail_ratio(values)
    assert near == pytest.approx(0.01) and far == pytest.approx(0.2)
    assert tail_ratio({0.0: 1.0}) is None


def test_periodic_crystal_has_no_fluctuations_and_converges_in_L():
    plan = SweepPlan(CRYSTAL, 16, (2, 4, 8, 16), (1.0,), (0, 1, 2), FillSpec("neutral"))
    report = sweep_L(plan)
    stats = report.aggregate["m=1"]
    assert all(s.std < 1e-12 for s in stats)
    means = [s.mean for s in stats]
    gaps = [abs(b - a) for a, b in zip(means, means[1:])]
    assert all(b < a / 3 for a, b in zip(gaps, gaps[1:]))


def test_uniform_background_is_mass_independent():
    plan = SweepPlan(CRYSTAL, 16, (4,), (2.0, 1.0, 0.5, 0.0), (0,), FillSpec("neutral"), uniform=1.0)
    report = sweep_m(plan)
    values = [r.objective for r in report.records]
    assert max(values) - min(values) < 1e-10
    assert all(abs(r.energy.interaction_per_vol) < 1e-12 for r in report.records)
    assert report.checks["monotone_ok"]


def test_small_mass_sweep_is_monotone(bench_params):
    plan = SweepPlan(bench_params, 16, (8,), (2.0, 1.0, 0.5, 0.25, 0.1, 0.0), (0, 1), FillSpec("neutral"))
    report = sweep_m(plan)
    assert report.ok, report.checks
    assert report.checks["tail_ok"]


def test_single_seed_tracks_multi_seed_mean(bench_params):
    plan = SweepPlan(bench_params, 16, (4, 8, 16), (1.0,), tuple(range(8)), FillSpec("fermi", 3.0))
    report = sweep_L(plan)
    stats = {s.key: s for s in report.aggregate["m=1"]}
    for L in (8, 16):
        single = next(r.objective for r in report.records if r.seed == 0 and r.L == L)
        assert abs(single - stats[L].mean) < 3 * stats[L].std + 1e-12


def test_task_order_is_worker_independent(bench_params):
    plan = SweepPlan(bench_params, 16, (4,), (1.0,), (2, 0, 1), FillSpec("neutral"))
    tasks = _tasks(plan, plan.L_values, plan.m_values)
    assert [t[4] for t in tasks] == [0, 1, 2]
    serial = [r.row() for r in run_tasks(tasks, 1)]
    parallel = [r.row() for r in run_tasks(tasks, 2)]
    assert serial == parallel


def test_report_files_are_reproducible(tmp_path, bench_params):
    plan = SweepPlan(bench_params, 16, (4, 8), (1.0,), (0, 1), FillSpec("fermi", 3.0))
    sweep_L(SweepPlan(**{**plan.__dict__, "output_dir": tmp_path / "a"}))
    sweep_L(SweepPlan(**{**plan.__dict__, "output_dir": tmp_path / "b"}))
    for name in ("runs.csv", "aggregate.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = io.read_csv(tmp_path / "a" / "runs.csv")
    assert len(rows) == 4 and list(rows[0])[:3] == ["seed", "L", "m"]
    assert (tmp_path / "a" / "timing.csv").exists()


def test_tilde_of_periodic_field_is_cell_average():
    g = GridSpec(1, 4, 8)
    x = g.coordinates()[0]
    f = GridField(g, np.cos(2 * np.pi * x) + 0.1 * x)
    out = tilde_transform([((k,), f) for k in range(4)])
    expected = np.mean([f.roll_cells(k).values for k in range(4)], axis=0)
    assert np.allclose(out.values, expected)
    assert np.allclose(out.values, out.roll_cells(1).values)


def test_tilde_commutes_with_translation(bench_params):
    # a field that is not translation covariant: mu weighted by a fixed profile
    g = GridSpec(1, 4, 8)
    weight = 1.0 + np.linspace(0.0, 1.0, g.n)
    r = sample_realization(bench_params, 4, 0)

    def field(real):
        return GridField(g, nuclear_density(real, g).values * weight)

    def tilde(real):
        return tilde_transform([((k,), field(shift_realization(real, -k))) for k in range(4)])

    for j in (1, 3):
        moved = tilde(shift_realization(r, j))
        assert np.allclose(moved.values, tilde(r).roll_cells(j).values, atol=1e-12)


def test_tilde_density_profiles_settle(bench_params):
    # cell profile of the tilde density over growing boxes: successive L2 gaps shrink
    profiles = []
    for L in (2, 4, 8):
        t = tilde_density(bench_params, L, 16, seed=0, m=1.0, fill=FillSpec("fermi", 3.0))
        profiles.append(t.values[:16])
    gaps = [np.linalg.norm(b - a) for a, b in zip(profiles, profiles[1:])]
    assert gaps[1] < gaps[0]
