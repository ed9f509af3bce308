"""Reduced Hartree-Fock for randomly perturbed crystals on periodic supercells."""

from .disorder import DisorderParams, Realization, nuclear_density, sample_realization, shift_realization
from .experiments import FillSpec, SweepPlan, sweep_L, sweep_m, tilde_density, tilde_transform
from .scf import (
    DensityMatrix,
    FixedCount,
    FixedFermi,
    SCFOptions,
    SCFResult,
    density_of,
    free_gas_state,
    scf_solve,
    total_energy,
    verify_self_consistency,
)
from .spectral import GridField, GridSpec, KernelSpec, build_hamiltonian, yukawa_potential
from .verify import (
    hoffmann_ostenhof_check,
    lieb_thirring_check,
    represent_density,
    represent_density_1d,
    represent_density_2d,
    spectral_projection_check,
)

__version__ = "0.1.0"
