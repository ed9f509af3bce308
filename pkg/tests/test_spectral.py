import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disordered_rhf.spectral import (
    GridField,
    GridSpec,
    KernelSpec,
    build_hamiltonian,
    from_fourier,
    gradient,
    periodic_convolution,
    real_space_kernel,
    real_space_potential,
    to_fourier,
    yukawa_energy,
    yukawa_kernel,
    yukawa_multiplier,
    yukawa_potential,
)


def random_field(grid, rng, neutral=False):
    values = rng.normal(size=grid.shape)
    if neutral:
        values -= values.mean()
    return GridField(grid, values)


def cosine(grid, mode=1):
    x = grid.coordinates()[0]
    return GridField(grid, np.cos(2 * np.pi * mode * x / grid.L))


def test_grid_rejects_bad_shapes():
    for bad in [(4, 2, 32), (1, 0, 32), (1, 2, 5), (1, 2, 2)]:
        with pytest.raises(ValueError):
            GridSpec(*bad)


def test_constant_field_has_single_zero_mode():
    g = GridSpec(2, 3, 8)
    c = to_fourier(GridField.constant(g, 2.5))
    assert abs(c.flat[0] - 2.5 * g.L ** (g.d / 2)) < 1e-12
    c.flat[0] = 0
    assert np.max(np.abs(c)) < 1e-12


def test_cosine_coefficients_are_half_root_L():
    g = GridSpec(1, 4, 16)
    c = to_fourier(cosine(g))
    expected = math.sqrt(g.L) / 2
    assert abs(c[1] - expected) < 1e-12 and abs(c[-1] - expected) < 1e-12
    rest = np.delete(c, [1, g.n - 1])
    assert np.max(np.abs(rest)) < 1e-12


def test_fourier_round_trip_and_parseval(rng):
    g = GridSpec(2, 2, 8)
    f = random_field(g, rng)
    back = from_fourier(to_fourier(f), g)
    assert np.max(np.abs(back.values - f.values)) < 1e-12
    assert abs(np.sum(np.abs(to_fourier(f)) ** 2) - f.norm() ** 2) < 1e-10 * f.norm() ** 2


def test_single_mode_yukawa_energy_by_hand():
    # two modes, |c|^2 = 1/4 each, multiplier 2 / (4 pi^2 + 1)
    g = GridSpec(1, 1, 32)
    f = cosine(g)
    D = yukawa_energy(f, f, KernelSpec(1.0, 1))
    assert D == pytest.approx(1 / (4 * np.pi**2 + 1), rel=1e-12)
    assert D == pytest.approx(0.0247, abs=1e-5)


def test_single_mode_yukawa_potential():
    g = GridSpec(1, 1, 32)
    V = yukawa_potential(cosine(g), KernelSpec(1.0, 1))
    assert np.max(np.abs(V.values - 2 / (4 * np.pi**2 + 1) * cosine(g).values)) < 1e-14


def test_zero_field_has_zero_energy_and_potential():
    g = GridSpec(1, 4, 16)
    z = GridField.zeros(g)
    k = KernelSpec.for_mass(0.0, 1)
    assert yukawa_energy(z, z, k) == 0.0
    assert np.all(yukawa_potential(z, k).values == 0)


def test_coulomb_needs_jellium():
    with pytest.raises(ValueError):
        KernelSpec(0.0, 1, jellium=False)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([1, 2]))
def test_energy_non_increasing_in_mass(seed, d):
    rng = np.random.default_rng(seed)
    g = GridSpec(d, 2, 8)
    f = random_field(g, rng, neutral=True)
    values = [yukawa_energy(f, f, KernelSpec.for_mass(m, d)) for m in (0.0, 0.5, 1.0, 2.0)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(values, values[1:]))
    assert values[-1] > 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.floats(0.1, 3.0))
def test_potential_pairing_matches_energy(seed, m):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, 3, 16)
    f = random_field(g, rng)
    k = KernelSpec(m, 1)
    D = yukawa_energy(f, f, k)
    assert yukawa_potential(f, k).inner(f) == pytest.approx(D, rel=1e-10)


def test_kernel_values_match_closed_form():
    # Y_1(1) = e^-1 in d = 1 and d = 3, with images negligible for a large box
    g1 = GridSpec(1, 80, 8)
    kern = real_space_kernel(KernelSpec(1.0, 1), g1)
    assert kern.values[g1.N] == pytest.approx(math.exp(-1), rel=1e-12)
    assert yukawa_kernel(np.array([1.0]), 1.0, 3)[0] == pytest.approx(0.367879, abs=5e-7)
    assert yukawa_kernel(np.array([1.0]), 1.0, 1)[0] == pytest.approx(0.367879, abs=5e-7)


def test_real_space_convolution_agrees_with_multiplier(rng):
    g = GridSpec(1, 4, 64)
    # a smooth neutral field, so the quadrature of the kinked kernel converges
    x = g.coordinates()[0]
    f = GridField(g, np.cos(2 * np.pi * x / g.L) + 0.5 * np.sin(6 * np.pi * x / g.L) + np.exp(np.cos(2 * np.pi * x / g.L)))
    f = f - GridField.constant(g, f.mean())
    k = KernelSpec(1.0, 1)
    a, b = yukawa_potential(f, k), real_space_potential(f, k)
    assert (a - b).norm() / a.norm() < 1e-6


def test_identity_multiplier_is_identity(rng):
    g = GridSpec(2, 2, 8)
    f = random_field(g, rng)
    assert np.max(np.abs(periodic_convolution(np.ones(g.shape), f).values - f.values)) < 1e-13
    k = KernelSpec(0.7, 2)
    same = periodic_convolution(yukawa_multiplier(k, g), f)
    assert np.array_equal(same.values, yukawa_potential(f, k).values)


def test_single_mode_saturates_multiplier_bound():
    g = GridSpec(1, 2, 16)
    k = KernelSpec(1.0, 1)
    f = cosine(g, 1)
    top = yukawa_multiplier(k, g)[1]
    assert yukawa_energy(f, f, k) == pytest.approx(top * f.norm() ** 2, rel=1e-12)


def test_free_spectrum_is_half_k_squared():
    g = GridSpec(1, 3, 8)
    lam, _ = build_hamiltonian(GridField.zeros(g)).eigh(7, method="dense")
    n = np.array([0, 1, 1, 2, 2, 3, 3])
    assert np.allclose(lam, 0.5 * (2 * np.pi * n / g.L) ** 2, atol=1e-10)


def test_constant_potential_shifts_spectrum():
    g = GridSpec(2, 1, 8)
    lam0, _ = build_hamiltonian(GridField.zeros(g)).eigh(6)
    lam1, _ = build_hamiltonian(GridField.constant(g, 0.75)).eigh(6)
    assert np.allclose(lam1 - lam0, 0.75, atol=1e-12)


def test_lowest_mathieu_level_converges():
    def lowest(N):
        g = GridSpec(1, 1, N)
        V = GridField(g, 2 * np.cos(2 * np.pi * g.coordinates()[0]))
        return build_hamiltonian(V).eigh(1, method="dense")[0][0]

    assert abs(lowest(64) - lowest(512)) < 1e-8


def test_iterative_and_dense_solvers_agree(rng):
    g = GridSpec(1, 4, 16)
    V = GridField(g, rng.normal(size=g.shape))
    H = build_hamiltonian(V)
    a, psi = H.eigh(5, method="dense")
    b, _ = H.eigh(5, method="iterative")
    assert np.allclose(a, b, atol=1e-9)
    h = g.cell_volume
    assert np.allclose(h * psi.reshape(5, -1) @ psi.reshape(5, -1).T, np.eye(5), atol=1e-10)


def test_apply_matches_matrix(rng):
    g = GridSpec(2, 1, 8)
    V = GridField(g, rng.normal(size=g.shape))
    H = build_hamiltonian(V)
    psi = rng.normal(size=g.shape)
    assert np.allclose(H.apply(psi).ravel(), H.matrix @ psi.ravel(), atol=1e-10)


def test_spectral_gradient_of_sine():
    g = GridSpec(1, 2, 32)
    x = g.coordinates()[0]
    f = GridField(g, np.sin(2 * np.pi * x / g.L))
    (df,) = gradient(f)
    assert np.max(np.abs(df.values - 2 * np.pi / g.L * np.cos(2 * np.pi * x / g.L))) < 1e-12


def test_roll_cells_is_translation():
    g = GridSpec(1, 3, 4)
    f = GridField(g, np.arange(g.size, dtype=float))
    assert np.array_equal(f.roll_cells(1).values, np.roll(f.values, -g.N))
    assert np.array_equal(f.roll_cells(1).roll_cells(-1).values, f.values)
