"""Build a density matrix with a prescribed density.

Takes the ground-state density of a disordered box (d = 1) and of a small
two-dimensional box, builds an admissible state with exactly that density,
and prints the reconstruction error, the occupation range, the largest
eigenvalue of the resulting operator and the orthonormality defect of the
discrete orbitals under grid refinement.

    python demos/representability.py
"""

from __future__ import annotations

import numpy as np

from disordered_rhf import DisorderParams, FixedCount, GridField, GridSpec, KernelSpec, scf_solve
from disordered_rhf.disorder import nuclear_density, sample_realization
from disordered_rhf.verify import reconstruction_error, represent_density


def describe(label, rho):
    dm = represent_density(rho)
    print(
        f"{label:<22} orbitals {dm.n_orbitals:>4}  error {reconstruction_error(dm, rho):.1e}  "
        f"occupations [{dm.occupations.min():.3f}, {dm.occupations.max():.3f}]  "
        f"max eigenvalue {dm.operator_spectrum().max():.4f}"
    )


def main():
    for d, L, N in ((1, 8, 32), (2, 2, 8)):
        params = DisorderParams(d, ((1.0, 0.5), (2.0, 0.5)), r_disp=0.1, half_width=0.2)
        mu = nuclear_density(sample_realization(params, L, 0), GridSpec(d, L, N))
        res = scf_solve(mu, KernelSpec(1.0, d), FixedCount(mu.integral()))
        describe(f"SCF density d={d} L={L}", res.density)

    print("\northonormality defect under refinement (smooth test density):")
    for d, Ns in ((1, (16, 32, 64, 128)), (2, (8, 16, 32))):
        defects = []
        for N in Ns:
            g = GridSpec(d, 2, N)
            rho = GridField(g, 1.2 + 0.5 * sum(np.cos(np.pi * xa) for xa in g.coordinates()))
            defects.append(represent_density(rho).orthonormality_defect())
        print(f"  d={d}: " + "  ".join(f"N={N}: {v:.1e}" for N, v in zip(Ns, defects)))


if __name__ == "__main__":
    main()
