"""Monte Carlo sweeps over seeds: box-size (thermodynamic limit) and
screening-mass (Yukawa to Coulomb) experiments, plus the tilde-transform."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import io
from .disorder import DisorderParams, nuclear_density, sample_realization, translated_windows, uniform_density
from .scf import EnergyBreakdown, FixedCount, FixedFermi, SCFOptions, scf_solve, verify_self_consistency
from .spectral import GridField, GridSpec, KernelSpec

RUN_COLUMNS = (
    "seed",
    "L",
    "m",
    "mode",
    "kinetic",
    "interaction",
    "particles",
    "grand_value",
    "iterations",
    "converged",
    "objective",
    "self_consistency",
)
TIMING_COLUMNS = ("seed", "L", "m", "wall_ms")


@dataclass(frozen=True)
class FillSpec:
    """How to fill: ``fermi`` (fixed eF), ``count`` (fixed N_e), ``per_cell``
    (N_e = value * L^d) or ``neutral`` (N_e = int mu)."""

    kind: str
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("fermi", "count", "per_cell", "neutral"):
            raise ValueError(f"unknown fill kind {self.kind!r}")
        if self.kind != "neutral" and self.value is None:
            raise ValueError(f"fill kind {self.kind!r} needs a value")

    def resolve(self, mu: GridField):
        if self.kind == "fermi":
            return FixedFermi(float(self.value))
        if self.kind == "count":
            return FixedCount(float(self.value))
        if self.kind == "per_cell":
            return FixedCount(float(self.value) * mu.grid.L**mu.grid.d)
        return FixedCount(mu.integral())


def build_nuclei(params: DisorderParams, L: int, N: int, seed: int, uniform: float | None = None) -> GridField:
    grid = GridSpec(params.dimension, L, N)
    if uniform is not None:
        return uniform_density(grid, uniform)
    return nuclear_density(sample_realization(params, L, seed), grid)


@dataclass(frozen=True)
class SweepPlan:
    params: DisorderParams
    N: int
    L_values: tuple[int, ...]
    m_values: tuple[float, ...]
    seeds: tuple[int, ...]
    fill: FillSpec
    options: SCFOptions = field(default_factory=SCFOptions)
    output_dir: Path | None = None
    workers: int = 1
    uniform: float | None = None
    band: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "L_values", tuple(int(L) for L in self.L_values))
        object.__setattr__(self, "m_values", tuple(float(m) for m in self.m_values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.L_values or any(L < 1 for L in self.L_values):
            raise ValueError("L values must be >= 1")
        if not self.m_values or any(m < 0 for m in self.m_values):
            raise ValueError("m values must be >= 0")
        if any(m == 0 for m in self.m_values) and self.fill.kind != "neutral":
            raise ValueError("m = 0 needs neutral canonical filling")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class ExperimentRecord:
    seed: int
    L: int
    m: float
    mode: str
    energy: EnergyBreakdown
    objective: float
    converged: bool
    iterations: int
    self_consistency: float
    n_degenerate: int
    wall_ms: float

    def row(self) -> tuple:
        e = self.energy
        return (
            self.seed,
            self.L,
            self.m,
            self.mode,
            e.kinetic_per_vol,
            e.interaction_per_vol,
            e.particles_per_vol,
            e.grand_canonical_value,
            self.iterations,
            self.converged,
            self.objective,
            self.self_consistency,
        )


def run_one(task) -> ExperimentRecord:
    """One SCF run; ``task = (params, L, N, m, seed, fill, options, uniform)``."""
    params, L, N, m, seed, fill, options, uniform = task
    start = time.perf_counter()
    mu = build_nuclei(params, L, N, seed, uniform)
    kernel = KernelSpec.for_mass(m, params.dimension)
    mode = fill.resolve(mu)
    res = scf_solve(mu, kernel, mode, options)
    sc = verify_self_consistency(res, mu, kernel, options) if res.converged else math.nan
    return ExperimentRecord(
        seed=seed,
        L=L,
        m=m,
        mode=fill.kind,
        energy=res.energy,
        objective=res.objective,
        converged=res.converged,
        iterations=res.iterations,
        self_consistency=sc,
        n_degenerate=res.n_degenerate,
        wall_ms=1000.0 * (time.perf_counter() - start),
    )


def run_tasks(tasks: Sequence, workers: int = 1) -> list[ExperimentRecord]:
    """Run independent tasks; results come back in task order whatever the worker count."""
    if workers <= 1 or len(tasks) <= 1:
        return [run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, tasks))


def _tasks(plan: SweepPlan, L_values, m_values) -> list:
    keys = sorted((seed, L, m) for seed in plan.seeds for L in L_values for m in m_values)
    return [(plan.params, L, plan.N, m, seed, plan.fill, plan.options, plan.uniform) for seed, L, m in keys]


@dataclass(frozen=True)
class Statistic:
    key: float
    count: int
    mean: float
    std: float
    stderr: float
    complete: bool

    def row(self) -> tuple:
        return (self.key, self.count, self.mean, self.std, self.stderr, self.complete)


def summarize(key: float, records: Iterable[ExperimentRecord]) -> Statistic:
    """Sample statistics of the objective, folded in seed order; NaN if any run failed."""
    records = sorted(records, key=lambda r: r.seed)
    complete = all(r.converged for r in records)
    values = np.array([r.objective for r in records])
    n = len(values)
    if not complete or n == 0:
        return Statistic(key, n, math.nan, math.nan, math.nan, False)
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if n > 1 else 0.0
    return Statistic(key, n, mean, std, std / math.sqrt(n), True)


@dataclass
class SweepReport:
    kind: str
    records: list[ExperimentRecord]
    aggregate: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[ExperimentRecord]:
        return [r for r in self.records if not r.converged]

    @property
    def ok(self) -> bool:
        return not self.failures and all(v for k, v in self.checks.items() if k.endswith("_ok"))

    def write(self, outdir) -> dict[str, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "runs": io.write_csv(outdir / "runs.csv", RUN_COLUMNS, (r.row() for r in self.records)),
            "timing": io.write_csv(
                outdir / "timing.csv", TIMING_COLUMNS, ((r.seed, r.L, r.m, r.wall_ms) for r in self.records)
            ),
        }
        key_name = "L" if self.kind == "sweep_L" else "m"
        header = ("group", key_name, "count", "mean", "std", "stderr", "complete")
        rows = []
        for group, stats in self.aggregate.items():
            rows.extend((group,) + s.row() for s in stats)
        paths["aggregate"] = io.write_csv(outdir / "aggregate.csv", header, rows)
        summary = {
            "kind": self.kind,
            "checks": self.checks,
            "failures": [{"seed": r.seed, "L": r.L, "m": r.m} for r in self.failures],
            "runs": len(self.records),
        }
        paths["summary"] = io.write_json(outdir / "summary.json", summary)
        return paths


def sweep_L(plan: SweepPlan) -> SweepReport:
    """Per-L statistics of I^L / L^d over seeds, for every (positive) m in the plan."""
    if any(m <= 0 for m in plan.m_values):
        raise ValueError("sweep over L needs m > 0")
    records = run_tasks(_tasks(plan, plan.L_values, plan.m_values), plan.workers)
    report = SweepReport("sweep_L", records)
    Ls = sorted(set(plan.L_values))
    for m in sorted(set(plan.m_values)):
        group = f"m={io.fmt(m)}"
        stats = [summarize(L, [r for r in records if r.L == L and r.m == m]) for L in Ls]
        report.aggregate[group] = stats
        report.checks[group] = _trend_checks(stats, plan)
    report.checks["all_converged_ok"] = not report.failures
    report.checks["self_consistency_ok"] = all(
        r.self_consistency <= 10 * plan.options.tol for r in records if r.converged
    )
    if plan.output_dir is not None:
        report.write(plan.output_dir)
    return report


def _trend_checks(stats: list[Statistic], plan: SweepPlan) -> dict:
    out: dict = {"complete": all(s.complete for s in stats)}
    if not out["complete"] or len(stats) < 2:
        return out
    stds = [s.std for s in stats]
    out["std_decreasing"] = all(b < a for a, b in zip(stds, stds[1:]))
    last = stats[-1]
    half = next((s for s in stats if 2 * s.key == last.key), stats[-2])
    band = plan.band if plan.band is not None else 2 * (last.stderr + half.stderr)
    out["mean_gap"] = abs(last.mean - half.mean)
    out["mean_band"] = band
    out["mean_stable"] = out["mean_gap"] < band
    d = plan.params.dimension
    # variance * L^d should stay within a factor-3 band if fluctuations self-average
    scaled = [s.std**2 * s.key**d for s in stats]
    out["variance_times_volume"] = scaled
    out["self_averaging_band"] = bool(max(scaled) <= 3 * min(scaled)) if min(scaled) > 0 else False
    return out


def sweep_m(plan: SweepPlan) -> SweepReport:
    """I_{mu,m} on a grid of masses for neutral canonical instances."""
    if plan.fill.kind != "neutral":
        raise ValueError("sweep over m needs neutral canonical filling (fill kind 'neutral')")
    records = run_tasks(_tasks(plan, plan.L_values, plan.m_values), plan.workers)
    report = SweepReport("sweep_m", records)
    tol = plan.options.tol
    ms = sorted(set(plan.m_values))
    violations = []
    tails = []
    for L in sorted(set(plan.L_values)):
        group = f"L={L}"
        report.aggregate[group] = [summarize(m, [r for r in records if r.L == L and r.m == m]) for m in ms]
        for seed in plan.seeds:
            by_m = {r.m: r for r in records if r.L == L and r.seed == seed and r.converged}
            values = {m: by_m[m].objective for m in ms if m in by_m}
            violations.extend(
                {"seed": seed, "L": L, "m_small": a, "m_large": b, "excess": values[b] - values[a]}
                for a, b in monotonicity_violations(values, 10 * tol)
            )
            tail = tail_ratio(values)
            if tail is not None:
                tails.append({"seed": seed, "L": L, "near": tail[0], "far": tail[1], "shrinks": tail[0] < tail[1]})
    report.checks["monotone_ok"] = not violations
    report.checks["violations"] = violations
    report.checks["tails"] = tails
    report.checks["tail_ok"] = all(t["shrinks"] for t in tails)
    report.checks["all_converged_ok"] = not report.failures
    report.checks["self_consistency_ok"] = all(r.self_consistency <= 10 * tol for r in records if r.converged)
    if plan.output_dir is not None:
        report.write(plan.output_dir)
    return report


def monotonicity_violations(values: dict[float, float], slack: float) -> list[tuple[float, float]]:
    """Pairs (a, b), a < b, of consecutive masses where I(b) > I(a) + slack (I must not increase with m)."""
    ms = sorted(values)
    return [(a, b) for a, b in zip(ms, ms[1:]) if values[b] > values[a] + slack]


def tail_ratio(values: dict[float, float], near=(0.1, 0.0), far=(1.0, 0.5)):
    """(|I(near0) - I(near1)|, |I(far0) - I(far1)|) when all four masses are present."""
    if not all(m in values for m in near + far):
        return None
    return abs(values[near[0]] - values[near[1]]), abs(values[far[0]] - values[far[1]])


def tilde_transform(fields: Sequence[tuple[Sequence[int], GridField]]) -> GridField:
    """g~(x) = L^-d sum_k g(tau_{-k} omega, x + k).

    ``fields`` pairs each lattice vector k of the box with the field computed
    for the configuration translated by -k (``disorder.translated_windows``).
    """
    if not fields:
        raise ValueError("no fields given")
    grid = fields[0][1].grid
    acc = np.zeros(grid.shape)
    for k, f in fields:
        if f.grid != grid:
            raise ValueError("all fields must share one grid")
        acc += f.roll_cells(k).values
    if len(fields) != grid.L**grid.d:
        raise ValueError(f"expected {grid.L ** grid.d} translated fields, got {len(fields)}")
    return GridField(grid, acc / len(fields))


def tilde_density(
    params: DisorderParams, L: int, N: int, seed: int, m: float, fill: FillSpec, options: SCFOptions | None = None
) -> GridField:
    """Tilde-transform of the ground-state density over all translated windows."""
    options = options or SCFOptions()
    grid = GridSpec(params.dimension, L, N)
    kernel = KernelSpec.for_mass(m, params.dimension)
    fields = []
    for k, real in translated_windows(params, L, seed):
        mu = nuclear_density(real, grid)
        res = scf_solve(mu, kernel, fill.resolve(mu), options)
        if not res.converged:
            raise RuntimeError(f"SCF did not converge for window k={k}")
        fields.append((k, res.density))
    return tilde_transform(fields)
