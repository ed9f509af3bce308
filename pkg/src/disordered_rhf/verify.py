"""Executable checks: Hoffmann-Ostenhof and Lieb-Thirring inequalities,
density representability by explicit construction, and the variational
characterization of spectral projections.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .disorder import _origin_node
from .scf import PAULI_SLACK, DensityMatrix, density_of, kinetic_trace
from .spectral import SPHERE_MEASURE, GridField, GridSpec, build_hamiltonian, gradient

SQRT_FLOOR = 1e-300


@dataclass(frozen=True)
class InequalityReport:
    """Outcome of checking ``lhs <= rhs``."""

    name: str
    lhs: float
    rhs: float
    instance: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def slack(self) -> float:
        return 1e-9 * max(abs(self.lhs), abs(self.rhs), 1.0)

    @property
    def holds(self) -> bool:
        return self.margin >= -self.slack

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(margin=self.margin, holds=self.holds, slack=self.slack)
        return out


def semiclassical_constant(d: int) -> float:
    """K_sc(d) = d/(d+2) (d (2 pi)^d / |S^{d-1}|)^{2/d}; K_sc(1) = pi^2/3."""
    return d / (d + 2) * (d * (2 * math.pi) ** d / SPHERE_MEASURE[d]) ** (2 / d)


def hoffmann_ostenhof_check(dm: DensityMatrix) -> InequalityReport:
    """int |grad sqrt(rho)|^2 <= Tr(-Delta gamma), both per unit volume."""
    g = dm.grid
    rho = density_of(dm)
    root = GridField(g, np.sqrt(np.maximum(rho.values, SQRT_FLOOR)))
    lhs = sum(float(np.sum(c.values**2)) for c in gradient(root)) * g.cell_volume / g.volume
    rhs = kinetic_trace(dm) / g.volume
    return InequalityReport("hoffmann_ostenhof", lhs, rhs, {"d": g.d, "L": g.L, "N": g.N})


def lieb_thirring_check(dm: DensityMatrix, constant_policy="half") -> InequalityReport:
    """K int rho^{(d+2)/d} <= Tr(-Delta gamma), per unit volume.

    ``constant_policy`` is ``"half"`` (K = K_sc / 2), ``"semiclassical"``
    (K = K_sc) or an explicit number.
    """
    occ = dm.occupations
    if np.any(occ < -PAULI_SLACK) or np.any(occ > 1 + PAULI_SLACK):
        raise ValueError("Lieb-Thirring check needs occupations in [0, 1]")
    g = dm.grid
    k_sc = semiclassical_constant(g.d)
    if constant_policy == "half":
        k_test = 0.5 * k_sc
    elif constant_policy == "semiclassical":
        k_test = k_sc
    else:
        k_test = float(constant_policy)
    rho = density_of(dm)
    lhs = k_test * float(np.sum(rho.values ** ((g.d + 2) / g.d))) * g.cell_volume / g.volume
    rhs = kinetic_trace(dm) / g.volume
    return InequalityReport(
        "lieb_thirring", lhs, rhs, {"d": g.d, "L": g.L, "N": g.N, "K_test": k_test, "K_sc": k_sc}
    )


# -- representability ----------------------------------------------------------


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """exp(-1/(1 - t^2)) on (-1, 1), zero outside."""
    out = np.zeros_like(t, dtype=float)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def _box_profile(x: list[np.ndarray], lo, hi) -> np.ndarray:
    """Product bump supported in the open box prod (lo_a, hi_a)."""
    out = np.ones(x[0].shape)
    for a, xa in enumerate(x):
        mid, half = 0.5 * (lo[a] + hi[a]), 0.5 * (hi[a] - lo[a])
        out = out * _smooth_step((xa - mid) / half)
    return out


# Pattern elements attached to the origin cell, as unions of boxes (lo, hi).
PATTERNS = {
    1: {
        "even": [((-0.5,), (0.5,))],
        "odd": [((0.0,), (1.0,))],
    },
    2: {
        "A": [((-5 / 12, -5 / 12), (5 / 12, 5 / 12))],
        "B": [((1 / 3, -1 / 4), (2 / 3, 1 / 4)), ((-1 / 4, 1 / 3), (1 / 4, 2 / 3))],
        "C": [((1 / 6, 1 / 6), (5 / 6, 5 / 6))],
    },
}


def _serpentine(index: np.ndarray) -> np.ndarray:
    """Boustrophedon order of integer node offsets (rows along the first axis)."""
    if index.shape[1] == 1:
        return np.argsort(index[:, 0], kind="stable")
    first, second = index[:, 0], index[:, 1]
    key_second = np.where(first % 2 == 0, second, -second)
    return np.lexsort((key_second, first))


def _element_orbitals(weights: np.ndarray, cell_volume: float):
    """Orbitals (on the element's nodes, in path order) and occupations for one element."""
    total = float(weights.sum()) * cell_volume
    if total <= 0:
        return None
    cumulative = (np.cumsum(weights) - 0.5 * weights) * cell_volume
    count = int(math.floor(total))
    occ = [1.0] * count
    if total - count > 0:
        occ.append(total - count)
    j = np.arange(1, len(occ) + 1)
    amp = np.sqrt(weights / total)
    orbitals = amp[None, :] * np.exp(2j * np.pi * j[:, None] * cumulative[None, :] / total)
    return orbitals, np.array(occ)


def _represent(rho: GridField) -> DensityMatrix:
    g = rho.grid
    if np.any(rho.values < 0):
        raise ValueError("density must be non-negative")
    if g.d not in PATTERNS:
        raise NotImplementedError(f"representability construction unsupported for d={g.d}")
    patterns = PATTERNS[g.d]
    d, N, n = g.d, g.N, g.n
    local = np.arange(-N, N)
    mesh = np.meshgrid(*([local] * d), indexing="ij")
    local_index = np.stack([m.ravel() for m in mesh], axis=1)
    local_x = [m.ravel() / N for m in mesh]
    profiles = {}
    for name, boxes in patterns.items():
        prof = sum(_box_profile(local_x, lo, hi) for lo, hi in boxes)
        keep = prof > 0
        idx, vals = local_index[keep], prof[keep]
        order = _serpentine(idx)
        profiles[name] = (idx[order], vals[order])
    start = _origin_node(g)
    sites = list(np.ndindex(*([g.L] * d)))

    def nodes_of(site, idx):
        glob = (start + N * np.asarray(site)[None, :] + idx) % n
        return np.ravel_multi_index(tuple(glob.T), g.shape)

    cover = np.zeros(g.size)
    for idx, vals in profiles.values():
        for site in sites:
            np.add.at(cover, nodes_of(site, idx), vals)
    if np.any(cover <= 0):
        raise RuntimeError("partition of unity does not cover the grid")
    n_patterns = len(patterns)
    flat_rho = rho.values.ravel()
    orbitals, occupations, family = [], [], []
    for label, (name, (idx, vals)) in enumerate(profiles.items()):
        for site in sites:
            nodes = nodes_of(site, idx)
            phi = n_patterns * vals / cover[nodes]
            built = _element_orbitals(flat_rho[nodes] * phi, g.cell_volume)
            if built is None:
                continue
            local_orbs, occ = built
            full = np.zeros((len(occ), g.size), dtype=complex)
            full[:, nodes] = local_orbs
            orbitals.append(full)
            occupations.append(occ / n_patterns)
            family.extend([label] * len(occ))
    if not orbitals:
        return DensityMatrix.empty(g)
    return DensityMatrix(
        g,
        np.concatenate(orbitals).reshape((-1, *g.shape)),
        np.concatenate(occupations),
        np.array(family),
    )


def represent_density_1d(rho: GridField) -> DensityMatrix:
    """Density matrix with density ``rho`` on a periodic line.

    Two interleaved families of cell elements (supports in [k-1/2, k+1/2] and
    [k, k+1]) carry a smooth partition of unity summing to 2.  In each element
    the localized density rho_k is written as N_k "plane waves in the
    cumulative-density variable", and gamma averages the two families.
    Orbitals are labelled by family in ``DensityMatrix.family``.
    """
    if rho.grid.d != 1:
        raise ValueError("represent_density_1d needs d = 1")
    return _represent(rho)


def represent_density_2d(rho: GridField) -> DensityMatrix:
    """Two-dimensional analogue with three periodic patterns A, B, C.

    Inside an element the cumulative density is accumulated along a
    serpentine path through the element's grid nodes.
    """
    if rho.grid.d == 3:
        raise NotImplementedError("representability construction unsupported for d=3")
    if rho.grid.d != 2:
        raise ValueError("represent_density_2d needs d = 2")
    return _represent(rho)


def represent_density(rho: GridField) -> DensityMatrix:
    if rho.grid.d == 1:
        return represent_density_1d(rho)
    return represent_density_2d(rho)


def reconstruction_error(dm: DensityMatrix, rho: GridField) -> float:
    """Per-volume L^2 distance between rho_gamma and rho."""
    return (density_of(dm) - rho).norm() / math.sqrt(rho.grid.volume)


# -- spectral projections ------------------------------------------------------


@dataclass(frozen=True)
class ProjectionReport:
    level: float
    projection_value: float
    eigenvalue_value: float
    best_trial_value: float
    trials: int
    violations: int
    slack: float

    @property
    def holds(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["holds"] = self.holds
        return out


def projection_objective(dm: DensityMatrix, V: GridField, level: float, kinetic_factor: float = 1.0) -> float:
    """(kinetic_factor * Tr(-Delta gamma) + <V, rho_gamma> - level Tr(gamma)) / L^d."""
    g = dm.grid
    value = kinetic_factor * kinetic_trace(dm) + V.inner(density_of(dm)) - level * dm.trace()
    return value / g.volume


def _random_state(rng: np.random.Generator, grid: GridSpec, low: np.ndarray, n_below: int) -> DensityMatrix:
    """One admissible trial state, drawn from three families: small perturbations
    of the projection itself, rotations inside a low-lying subspace, and
    random states of the whole space."""
    size, n_low = grid.size, low.shape[1]
    kind = rng.integers(3)
    if kind == 0 and n_below > 0:
        r = min(n_low, n_below + int(rng.integers(0, 3)))
        eps = 10.0 ** rng.uniform(-6, -2)
        mix = np.eye(n_low, r) + eps * (rng.normal(size=(n_low, r)) + 1j * rng.normal(size=(n_low, r)))
        raw = low @ mix + eps * rng.normal(size=(size, r)) * np.linalg.norm(low[:, 0])
        occ = np.where(np.arange(r) < n_below, 1.0 - eps * rng.random(r), eps * rng.random(r))
    elif kind == 1 and n_low > 0:
        r = int(rng.integers(1, n_low + 1))
        mix = rng.normal(size=(n_low, r)) + 1j * rng.normal(size=(n_low, r))
        noise = rng.normal(scale=10.0 ** rng.uniform(-4, -1), size=(size, r))
        raw = low @ mix + noise * np.linalg.norm(low @ mix, axis=0)
        occ = rng.random(r)
    else:
        r = int(rng.integers(1, max(n_low, 1) + 1))
        raw = rng.normal(size=(size, r)) + 1j * rng.normal(size=(size, r))
        occ = rng.random(r)
    q, _ = np.linalg.qr(raw)
    orbitals = (q.T / math.sqrt(grid.cell_volume)).reshape((-1, *grid.shape))
    return DensityMatrix(grid, orbitals, occ)


def spectral_projection_check(
    V: GridField, level: float, trials: int = 100, seed: int = 0, kinetic_factor: float = 1.0
) -> ProjectionReport:
    """Compare P = 1(H < level), H = kinetic_factor (-Delta) + V, against random admissible states."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    g = V.grid
    H = build_hamiltonian(V, kinetic_factor)
    lam, psi = H.eigh(method="dense")
    below = lam < level
    P = DensityMatrix(g, psi[below], np.ones(int(below.sum())))
    value = projection_objective(P, V, level, kinetic_factor)
    eig_value = float(np.sum(lam[below] - level)) / g.volume
    n_low = min(g.size, 2 * int(below.sum()) + 4)
    low = psi[:n_low].reshape(n_low, -1).T * math.sqrt(g.cell_volume)
    rng = np.random.default_rng(seed)
    slack = 1e-10 * max(1.0, abs(value))
    best = math.inf
    violations = 0
    for _ in range(trials):
        trial = _random_state(rng, g, low, int(below.sum()))
        t_value = projection_objective(trial, V, level, kinetic_factor)
        best = min(best, t_value)
        if t_value < value - slack:
            violations += 1
    return ProjectionReport(float(level), value, eig_value, best, trials, violations, slack)
