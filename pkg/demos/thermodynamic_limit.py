"""Self-averaging of the energy per unit volume as the box grows.

Runs the grand-canonical supercell problem (fixed Fermi level) for many
disorder seeds at each box size and prints mean, standard deviation and
std * sqrt(L).  Fluctuations shrink like L^{-1/2} while the mean settles.

    python demos/thermodynamic_limit.py --seeds 16 --sizes 4 8 16 32
"""

from __future__ import annotations

import argparse
import math

from disordered_rhf import DisorderParams, FillSpec, SCFOptions, SweepPlan, sweep_L


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--seeds", type=int, default=16)
    parser.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 16, 32])
    parser.add_argument("--fermi-level", type=float, default=3.0)
    parser.add_argument("--N", type=int, default=16)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--output", default=None, help="directory for runs/aggregate CSV")
    args = parser.parse_args(argv)

    params = DisorderParams(1, ((1.0, 0.5), (2.0, 0.5)), r_disp=0.1, half_width=0.2)
    plan = SweepPlan(
        params,
        args.N,
        tuple(args.sizes),
        (1.0,),
        tuple(range(args.seeds)),
        FillSpec("fermi", args.fermi_level),
        SCFOptions(),
        output_dir=args.output,
        workers=args.workers,
    )
    report = sweep_L(plan)
    print(f"{'L':>4} {'mean':>10} {'std':>8} {'std*sqrt(L)':>12} {'stderr':>8}")
    for s in report.aggregate["m=1"]:
        print(f"{int(s.key):>4} {s.mean:>10.5f} {s.std:>8.4f} {s.std * math.sqrt(s.key):>12.4f} {s.stderr:>8.4f}")
    checks = report.checks["m=1"]
    print(f"\nstd decreasing: {checks.get('std_decreasing')}, "
          f"last mean gap {checks.get('mean_gap', float('nan')):.4f} (band {checks.get('mean_band', float('nan')):.4f})")


if __name__ == "__main__":
    main()
