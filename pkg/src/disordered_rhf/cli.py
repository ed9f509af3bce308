"""Command-line interface.

    disordered-rhf <command> [--config FILE] [--set key=value ...] [--output DIR]

Commands: sample, solve, sweep-l, sweep-m, verify, represent, and run (which
dispatches on the config's ``experiment`` key).  Exit codes:
0 success, 1 a check was violated, 2 invalid configuration or input,
3 an SCF run did not converge, 4 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, load_config
from .disorder import charge_defect, nuclear_density, sample_realization
from .experiments import SweepPlan, build_nuclei, sweep_L, sweep_m
from .scf import SCFResult, density_of, scf_solve, verify_self_consistency
from .spectral import GridSpec, KernelSpec, yukawa_potential
from .verify import (
    hoffmann_ostenhof_check,
    lieb_thirring_check,
    reconstruction_error,
    represent_density,
    spectral_projection_check,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4

SUMMARY_COLUMNS = ("check", "instance", "status", "lhs", "rhs", "margin")


class InvalidInput(ValueError):
    pass


def _seed_dir(cfg: RunConfig, seed: int) -> Path:
    out = cfg.output / f"seed_{seed}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solve(cfg: RunConfig, seed: int):
    mu = build_nuclei(cfg.params, cfg.L, cfg.N, seed, cfg.uniform)
    k = KernelSpec.for_mass(cfg.m, cfg.params.dimension)
    mode = cfg.fill.resolve(mu)
    return mu, k, scf_solve(mu, k, mode, cfg.options)


def _result_dict(cfg: RunConfig, seed: int, res: SCFResult, gap: float) -> dict:
    occupied = int(np.count_nonzero(res.dm.occupations))
    return {
        "seed": seed,
        "L": cfg.L,
        "N": cfg.N,
        "m": cfg.m,
        "d": cfg.params.dimension,
        "fill": {"mode": cfg.fill.kind, "value": cfg.fill.value},
        "mode": type(res.mode).__name__,
        "converged": res.converged,
        "iterations": res.iterations,
        "final_residual": res.residual_history[-1],
        "self_consistency": gap,
        "energy": res.energy.to_dict(),
        "objective": res.objective,
        "fermi_bracket": list(res.fermi_bracket),
        "n_degenerate": res.n_degenerate,
        "electrons": res.dm.trace(),
        "occupations": res.dm.occupations[:occupied],
        "eigenvalues": res.eigenvalues[: occupied + 4],
        "options": cfg.options.to_dict(),
    }


def cmd_sample(cfg: RunConfig) -> int:
    for seed in cfg.seeds:
        out = _seed_dir(cfg, seed)
        grid = GridSpec(cfg.params.dimension, cfg.L, cfg.N)
        real = sample_realization(cfg.params, cfg.L, seed)
        mu = nuclear_density(real, grid)
        (out / "realization.json").write_text(real.to_json(include_sites=True) + "\n")
        io.write_field(out / "mu.bin", mu)
        io.write_field_csv(out / "mu_preview.csv", mu)
        io.write_json(
            out / "sample.json",
            {
                "seed": seed,
                "L": cfg.L,
                "N": cfg.N,
                "mean_charge_law": cfg.params.mean_charge,
                "total_charge": real.total_charge(),
                "quadrature_defect": charge_defect(real, mu),
            },
        )
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    status = EXIT_OK
    for seed in cfg.seeds:
        out = _seed_dir(cfg, seed)
        mu, k, res = _solve(cfg, seed)
        gap = verify_self_consistency(res, mu, k, cfg.options)
        io.write_json(out / "result.json", _result_dict(cfg, seed, res, gap))
        io.write_field(out / "density.bin", res.density)
        io.write_state(out / "state.bin", res.dm)
        io.write_csv(out / "history.csv", ("iteration", "residual"), enumerate(res.residual_history, 1))
        if not res.converged:
            print(f"seed {seed}: SCF did not converge in {res.iterations} iterations", file=sys.stderr)
            status = EXIT_NOT_CONVERGED
    return status


def _plan(cfg: RunConfig, L_values, m_values) -> SweepPlan:
    return SweepPlan(
        params=cfg.params,
        N=cfg.N,
        L_values=L_values,
        m_values=m_values,
        seeds=cfg.seeds,
        fill=cfg.fill,
        options=cfg.options,
        output_dir=cfg.output,
        workers=cfg.workers,
        uniform=cfg.uniform,
        band=cfg.band,
    )


def _sweep_status(report) -> int:
    if report.failures:
        return EXIT_NOT_CONVERGED
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_sweep_l(cfg: RunConfig) -> int:
    return _sweep_status(sweep_L(_plan(cfg, cfg.L_values, (cfg.m,))))


def cmd_sweep_m(cfg: RunConfig) -> int:
    return _sweep_status(sweep_m(_plan(cfg, (cfg.L,), cfg.m_values)))


def _representability(dm_density, instance) -> dict:
    if dm_density.grid.d not in (1, 2):
        return {"instance": instance, "status": "unsupported", "d": dm_density.grid.d}
    rep = represent_density(dm_density)
    error = reconstruction_error(rep, dm_density)
    top = float(rep.operator_spectrum().max()) if rep.n_orbitals else 0.0
    occ = rep.occupations
    holds = error <= 1e-8 and top <= 1 + 1e-9 and bool(np.all((occ >= 0) & (occ <= 1)))
    return {
        "instance": instance,
        "status": "pass" if holds else "fail",
        "reconstruction_error": error,
        "max_operator_eigenvalue": top,
        "orthonormality_defect": rep.orthonormality_defect(),
        "n_orbitals": rep.n_orbitals,
        "lhs": error,
        "rhs": 1e-8,
    }


def _inequality(report, instance) -> dict:
    out = report.to_dict()
    out.update(instance=instance, status="pass" if report.holds else "fail")
    return out


def cmd_verify(cfg: RunConfig) -> int:
    checks = cfg.checks
    if not checks:
        return EXIT_OK
    cfg.output.mkdir(parents=True, exist_ok=True)
    results: dict[str, list[dict]] = {c: [] for c in checks}
    status = EXIT_OK
    if cfg.state is not None:
        dm = io.read_state(cfg.state)
        instances = [(f"state:{Path(cfg.state).name}", dm, None)]
    else:
        instances = []
        for seed in cfg.seeds:
            mu, k, res = _solve(cfg, seed)
            if not res.converged:
                status = EXIT_NOT_CONVERGED
            instances.append((f"seed:{seed}", res.dm, (mu, k, res)))
    for name, dm, solved in instances:
        if "hoffmann_ostenhof" in checks:
            results["hoffmann_ostenhof"].append(_inequality(hoffmann_ostenhof_check(dm), name))
        if "lieb_thirring" in checks:
            results["lieb_thirring"].append(_inequality(lieb_thirring_check(dm, cfg.lt_policy), name))
        if "representability" in checks:
            results["representability"].append(_representability(density_of(dm), name))
        for check in ("self_consistency", "spectral_projection"):
            if check not in checks:
                continue
            if solved is None:
                results[check].append({"instance": name, "status": "skipped", "reason": "needs a fresh solve"})
                continue
            mu, k, res = solved
            if check == "self_consistency":
                gap = verify_self_consistency(res, mu, k, cfg.options)
                bound = 10 * cfg.options.tol
                results[check].append(
                    {"instance": name, "status": "pass" if gap <= bound else "fail", "lhs": gap, "rhs": bound}
                )
            else:
                V = yukawa_potential(res.density - mu, k)
                level = cfg.level if cfg.level is not None else res.energy.fermi_level
                rep = spectral_projection_check(V, level, cfg.trials, cfg.trial_seed, kinetic_factor=0.5)
                out = rep.to_dict()
                out.update(
                    instance=name,
                    status="pass" if rep.holds else "fail",
                    lhs=rep.projection_value,
                    rhs=rep.best_trial_value,
                )
                results[check].append(out)
    rows = []
    for check in checks:
        io.write_json(cfg.output / f"{check}.json", {"check": check, "reports": results[check]})
        for r in results[check]:
            lhs, rhs = r.get("lhs", math.nan), r.get("rhs", math.nan)
            rows.append((check, r["instance"], r["status"], lhs, rhs, rhs - lhs))
            if r["status"] == "fail" and status == EXIT_OK:
                status = EXIT_VIOLATION
    io.write_csv(cfg.output / "summary.csv", SUMMARY_COLUMNS, rows)
    return status


def cmd_represent(cfg: RunConfig) -> int:
    if cfg.represent_input is None:
        raise InvalidInput("represent needs represent.input (a density field file)")
    rho = io.read_field(cfg.represent_input)
    if rho.grid.d not in (1, 2):
        raise InvalidInput(f"unsupported: representability construction for d={rho.grid.d}")
    dm = represent_density(rho)
    cfg.output.mkdir(parents=True, exist_ok=True)
    error = reconstruction_error(dm, rho)
    summary = {
        "input": str(cfg.represent_input),
        "d": rho.grid.d,
        "L": rho.grid.L,
        "N": rho.grid.N,
        "n_orbitals": dm.n_orbitals,
        "n_families": int(dm.family.max()) + 1 if dm.n_orbitals else 0,
        "occupation_range": [float(dm.occupations.min()), float(dm.occupations.max())] if dm.n_orbitals else [0, 0],
        "trace": dm.trace(),
        "reconstruction_error": error,
        "orthonormality_defect": dm.orthonormality_defect(),
        "max_operator_eigenvalue": float(dm.operator_spectrum().max()) if dm.n_orbitals else 0.0,
    }
    io.write_json(cfg.output / "represent.json", summary)
    io.write_state(cfg.output / "represented_state.bin", dm)
    return EXIT_OK if error <= 1e-8 else EXIT_VIOLATION


COMMANDS = {
    "sample": (cmd_sample, "sample a disorder realization and its nuclear density"),
    "solve": (cmd_solve, "solve the supercell problem for each seed"),
    "sweep-l": (cmd_sweep_l, "box-size sweep over seeds"),
    "sweep-m": (cmd_sweep_m, "screening-mass sweep over seeds"),
    "verify": (cmd_verify, "run inequality and consistency checks"),
    "represent": (cmd_represent, "build a density matrix for a given density"),
    "run": (None, "run the command named by the config's 'experiment' key"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="disordered-rhf", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", "-c", help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. grid.L=8 (repeatable)")
        p.add_argument("--output", "-o", help="output directory (same as --set output=DIR)")
        p.add_argument("--seed", type=int, action="append", help="seed (repeatable; replaces config seeds)")
        p.add_argument("--workers", type=int, help="worker processes for sweeps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.output is not None:
        overrides.append(f"output={args.output}")
    if args.seed:
        overrides.append(f"seeds={args.seed}")
    if args.workers is not None:
        overrides.append(f"sweep.workers={args.workers}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    command = args.command
    if command == "run":
        if cfg.experiment is None:
            print("config error: 'run' needs the config key 'experiment'", file=sys.stderr)
            return EXIT_INVALID
        command = cfg.experiment
    handler = COMMANDS[command][0]
    try:
        return handler(cfg)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NotImplementedError as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
