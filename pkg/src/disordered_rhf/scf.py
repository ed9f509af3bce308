"""Supercell reduced Hartree-Fock: density matrices, Aufbau filling, SCF loop.

Energies are reported per unit volume of the box.  The energy functional is

    E(gamma) = 1/2 Tr(-Delta gamma) + 1/2 D_{m,L}(rho_gamma - mu, rho_gamma - mu)

and the grand-canonical value subtracts ``fermi_level * Tr(gamma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .spectral import (
    DENSE_MAX,
    GridField,
    GridSpec,
    KernelSpec,
    build_hamiltonian,
    to_fourier,
    yukawa_energy,
    yukawa_multiplier,
    yukawa_potential,
)

PAULI_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """gamma = sum_i occupations[i] |orbitals[i]><orbitals[i]|.

    Orbitals are stored as an array of shape ``(n, *grid.shape)``, normalized
    for the grid quadrature.  Orbitals sharing a ``family`` label are
    (approximately) orthonormal; a state built as a convex combination of
    several orthonormal families (see the representability constructions)
    carries one label per family.  ``family=None`` means a single family.
    """

    grid: GridSpec
    orbitals: np.ndarray
    occupations: np.ndarray
    family: np.ndarray | None = None

    def __post_init__(self):
        orbitals = np.asarray(self.orbitals)
        occ = np.asarray(self.occupations, dtype=float).ravel()
        orbitals = orbitals.reshape((len(occ), *self.grid.shape))
        if np.any(occ < -PAULI_SLACK) or np.any(occ > 1 + PAULI_SLACK):
            raise ValueError(f"occupations must lie in [0, 1], got range [{occ.min()}, {occ.max()}]")
        fam = np.zeros(len(occ), dtype=int) if self.family is None else np.asarray(self.family, dtype=int)
        if fam.shape != occ.shape:
            raise ValueError("family labels must match the number of orbitals")
        for arr in (orbitals, occ, fam):
            arr.setflags(write=False)
        object.__setattr__(self, "orbitals", orbitals)
        object.__setattr__(self, "occupations", occ)
        object.__setattr__(self, "family", fam)

    @property
    def n_orbitals(self) -> int:
        return len(self.occupations)

    def trace(self) -> float:
        return float(self.occupations.sum())

    def gram(self) -> np.ndarray:
        flat = self.orbitals.reshape(self.n_orbitals, -1)
        return self.grid.cell_volume * (flat.conj() @ flat.T)

    def orthonormality_defect(self) -> float:
        """max |G - I| over pairs of orbitals in the same family."""
        if self.n_orbitals == 0:
            return 0.0
        G = self.gram()
        same = self.family[:, None] == self.family[None, :]
        return float(np.max(np.abs(G - np.eye(self.n_orbitals))[same]))

    def operator_spectrum(self) -> np.ndarray:
        """Non-zero spectrum of gamma as an operator, via the weighted Gram matrix."""
        if self.n_orbitals == 0:
            return np.zeros(0)
        s = np.sqrt(self.occupations)
        M = s[:, None] * self.gram() * s[None, :]
        return np.linalg.eigvalsh(M)

    def to_orthonormal(self, cutoff: float = 1e-14) -> DensityMatrix:
        """Diagonalize gamma: same operator, one orthonormal family."""
        if self.n_orbitals == 0:
            return self
        s = np.sqrt(self.occupations)
        M = s[:, None] * self.gram() * s[None, :]
        lam, U = np.linalg.eigh(M)
        keep = lam > cutoff
        lam, U = lam[keep], U[:, keep]
        flat = self.orbitals.reshape(self.n_orbitals, -1)
        new = ((s[:, None] * U) / np.sqrt(lam)[None, :]).T @ flat
        return DensityMatrix(self.grid, new.reshape((-1, *self.grid.shape)), np.minimum(lam, 1.0))

    @classmethod
    def empty(cls, grid: GridSpec) -> DensityMatrix:
        return cls(grid, np.zeros((0, *grid.shape)), np.zeros(0))


def density_of(dm: DensityMatrix) -> GridField:
    """rho(x) = sum_i n_i |psi_i(x)|^2."""
    if dm.n_orbitals == 0:
        return GridField.zeros(dm.grid)
    weights = dm.occupations.reshape((-1,) + (1,) * dm.grid.d)
    return GridField(dm.grid, np.sum(weights * np.abs(dm.orbitals) ** 2, axis=0))


def kinetic_trace(dm: DensityMatrix) -> float:
    """Tr(-Delta gamma) = sum_i n_i sum_K |K|^2 |c_K(psi_i)|^2."""
    if dm.n_orbitals == 0:
        return 0.0
    g = dm.grid
    axes = tuple(range(1, g.d + 1))
    coeffs = np.fft.fftn(dm.orbitals, axes=axes)
    # |c_K|^2 = h^{2d} / L^d |fft|^2
    power = np.sum(g.k_squared * np.abs(coeffs) ** 2, axis=axes) * g.cell_volume**2 / g.volume
    return float(np.dot(dm.occupations, power))


# -- filling -----------------------------------------------------------------


@dataclass(frozen=True)
class FixedFermi:
    """Grand-canonical filling at a prescribed Fermi level."""

    fermi_level: float


@dataclass(frozen=True)
class FixedCount:
    """Canonical filling with a prescribed (real) electron count."""

    n_electrons: float

    def __post_init__(self):
        if self.n_electrons < 0:
            raise ValueError("electron count must be non-negative")


@dataclass(frozen=True)
class Filling:
    occupations: np.ndarray
    fermi_level: float
    bracket: tuple[float, float]
    n_degenerate: int


def default_deg_tol(energy: float) -> float:
    return 1e-9 * max(1.0, abs(energy))


def fill_states(eigenvalues, mode, deg_tol: float | None = None) -> Filling:
    """Aufbau occupations for ascending ``eigenvalues``.

    FixedFermi: levels below ``fermi_level - deg_tol`` are filled, levels within
    ``deg_tol`` of it are left empty (delta = 0) and counted in
    ``n_degenerate``.  FixedCount: levels are filled in ascending order; a
    partially filled (possibly degenerate) top level is split equally.  The
    returned Fermi level is then the top filled eigenvalue, and ``bracket`` is
    the interval of admissible Fermi levels.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size and np.any(np.diff(lam) < 0):
        raise ValueError("eigenvalues must be sorted ascending")
    occ = np.zeros(lam.size)
    if isinstance(mode, FixedFermi):
        eF = float(mode.fermi_level)
        tol = default_deg_tol(eF) if deg_tol is None else deg_tol
        occ[lam < eF - tol] = 1.0
        n_deg = int(np.count_nonzero(np.abs(lam - eF) <= tol))
        return Filling(occ, eF, (eF, eF), n_deg)
    if not isinstance(mode, FixedCount):
        raise TypeError(f"unknown fill mode {mode!r}")
    ne = float(mode.n_electrons)
    if ne > lam.size + 1e-12:
        raise ValueError(f"cannot place {ne} electrons in {lam.size} states")
    if ne == 0 or lam.size == 0:
        top = lam[0] if lam.size else 0.0
        return Filling(occ, float(top), (-math.inf, float(top)), 0)
    remaining = ne
    i = 0
    eF = lam[0]
    n_deg = 0
    partial = False
    while remaining > 1e-12 and i < lam.size:
        tol = default_deg_tol(lam[i]) if deg_tol is None else deg_tol
        j = i + 1
        while j < lam.size and lam[j] - lam[i] <= tol:
            j += 1
        size = j - i
        eF = lam[i]
        if remaining >= size - 1e-12:
            occ[i:j] = 1.0
            remaining -= size
        else:
            occ[i:j] = remaining / size
            remaining = 0.0
            partial = True
            n_deg = size
        i = j
    occ = np.clip(occ, 0.0, 1.0)
    upper = eF if partial else (lam[i] if i < lam.size else math.inf)
    return Filling(occ, float(eF), (float(eF), float(upper)), n_deg)


# -- energies ----------------------------------------------------------------


@dataclass(frozen=True)
class EnergyBreakdown:
    """Per-unit-volume energy terms.

    ``kinetic_per_vol`` is the functional's term 1/2 Tr(-Delta gamma) / L^d;
    ``kinetic_trace_per_vol`` is Tr(-Delta gamma) / L^d.
    """

    kinetic_per_vol: float
    interaction_per_vol: float
    particles_per_vol: float
    grand_canonical_value: float
    fermi_level: float

    @property
    def energy_per_vol(self) -> float:
        return self.kinetic_per_vol + self.interaction_per_vol

    @property
    def kinetic_trace_per_vol(self) -> float:
        return 2.0 * self.kinetic_per_vol

    def to_dict(self) -> dict:
        return {
            "kinetic_per_vol": self.kinetic_per_vol,
            "interaction_per_vol": self.interaction_per_vol,
            "particles_per_vol": self.particles_per_vol,
            "grand_canonical_value": self.grand_canonical_value,
            "energy_per_vol": self.energy_per_vol,
            "fermi_level": self.fermi_level,
        }


def total_energy(dm: DensityMatrix, mu: GridField, k: KernelSpec, fermi_level: float) -> EnergyBreakdown:
    vol = dm.grid.volume
    f = density_of(dm) - mu
    kinetic = 0.5 * kinetic_trace(dm) / vol
    interaction = 0.5 * yukawa_energy(f, f, k) / vol
    particles = dm.trace() / vol
    grand = kinetic + interaction - fermi_level * particles
    return EnergyBreakdown(kinetic, interaction, particles, grand, float(fermi_level))


# -- SCF ---------------------------------------------------------------------


@dataclass(frozen=True)
class SCFOptions:
    alpha: float = 0.3
    tol: float = 1e-8
    max_iter: int = 1000
    deg_tol: float | None = None
    eigensolver: str = "auto"
    dense_max: int = DENSE_MAX
    anderson: bool = True
    anderson_depth: int = 6
    init: str = "mu"
    pinning_window: float = 0.05
    pinning_max_levels: int = 4

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("mixing parameter alpha must lie in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.eigensolver not in ("auto", "dense", "iterative"):
            raise ValueError(f"unknown eigensolver {self.eigensolver!r}")
        if self.init not in ("mu", "uniform"):
            raise ValueError(f"unknown initialization {self.init!r}")
        if self.pinning_window < 0 or self.pinning_max_levels < 1:
            raise ValueError("pinning window must be >= 0 and cover at least one level")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class SCFResult:
    density: GridField
    dm: DensityMatrix
    energy: EnergyBreakdown
    residual_history: tuple[float, ...]
    converged: bool
    iterations: int
    mode: FixedFermi | FixedCount
    eigenvalues: np.ndarray = field(repr=False)
    fermi_bracket: tuple[float, float] = (0.0, 0.0)
    n_degenerate: int = 0
    initial_energy: EnergyBreakdown | None = None
    tol: float = 1e-8
    grand_canonical: bool = False

    @property
    def objective(self) -> float:
        """Grand-canonical value for fixed-Fermi runs, energy per volume otherwise."""
        if self.grand_canonical:
            return self.energy.grand_canonical_value
        return self.energy.energy_per_vol


def _lowest_states(H, mode, opts: SCFOptions, n_hint: int | None):
    g = H.grid
    method = opts.eigensolver
    if method == "auto":
        method = "dense" if g.size <= opts.dense_max else "iterative"
    if isinstance(mode, FixedCount):
        n = min(g.size, int(math.ceil(mode.n_electrons)) + 8)
        while True:
            lam, psi = H.eigh(n, method=method, dense_max=opts.dense_max)
            if n >= g.size:
                return lam, psi
            filled = fill_states(lam, mode, opts.deg_tol)
            if lam[-1] - filled.fermi_level > max(10 * default_deg_tol(filled.fermi_level), opts.pinning_window):
                return lam, psi
            n = min(g.size, 2 * n)
    eF = mode.fermi_level
    tol = default_deg_tol(eF) if opts.deg_tol is None else opts.deg_tol
    tol = max(tol, 0.5 * opts.pinning_window)
    if method == "dense":
        lam, v = scipy.linalg.eigh(H.matrix, subset_by_value=(-np.inf, eF + 2 * tol))
        psi = (v.T / math.sqrt(g.cell_volume)).reshape((-1, *g.shape))
        return lam, psi
    n = max(8, n_hint or 8)
    while True:
        n = min(n, g.size - 1)
        lam, psi = H.eigh(n, method="iterative")
        if lam[-1] > eF + 2 * tol or n >= g.size - 1:
            keep = lam <= eF + 2 * tol
            return lam[keep], psi[keep]
        n *= 2


def _symmetric_basis(m: int) -> np.ndarray:
    """Orthonormal basis (Frobenius) of real symmetric m x m matrices."""
    basis = []
    for i in range(m):
        for j in range(i, m):
            E = np.zeros((m, m))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / math.sqrt(2.0)
            basis.append(E)
    return np.array(basis)


def _newton_step(grad, hess, trace):
    """Newton direction, keeping the trace fixed when ``trace`` is given."""
    if trace is None:
        return np.linalg.solve(hess, -grad)
    p = len(grad)
    K = np.zeros((p + 1, p + 1))
    K[:p, :p] = hess
    K[:p, p] = K[p, :p] = trace
    return np.linalg.solve(K, np.append(-grad, 0.0))[:p]


def _cluster_qp(a: np.ndarray, M: np.ndarray, basis: np.ndarray, total: float | None) -> np.ndarray:
    """Minimize a.x + x.M.x/2 over delta = sum_s x_s basis_s with 0 <= delta <= 1
    (and tr delta = total); M positive semidefinite.

    Log-det barrier path followed by Newton steps, then an exact solve on
    the face selected by the near-boundary eigenvalues.  Returns delta.
    """
    m = basis.shape[1]
    eye = np.eye(m)
    if total is not None and total <= 0:
        return np.zeros((m, m))
    if total is not None and total >= m:
        return eye
    trace = np.einsum("sii->s", basis) if total is not None else None
    start = (total / m if total is not None else 0.5) * eye
    x = np.einsum("sij,ij->s", basis, start)
    scale = max(1.0, float(np.abs(a).max()), float(np.abs(M).max()))

    def matrix(v):
        return np.einsum("s,sij->ij", v, basis)

    def feasible(v):
        w = np.linalg.eigvalsh(matrix(v))
        return w.min() > 0 and w.max() < 1

    def merit(v, tau):
        D = matrix(v)
        return tau * (a @ v + 0.5 * v @ M @ v) - np.linalg.slogdet(D)[1] - np.linalg.slogdet(eye - D)[1]

    tau = 1.0 / scale
    while 2 * m / tau > 1e-11 * scale:
        for _ in range(100):
            D = matrix(x)
            P, C = np.linalg.inv(D), np.linalg.inv(eye - D)
            PE = np.einsum("ij,sjk->sik", P, basis)
            CE = np.einsum("ij,sjk->sik", C, basis)
            grad = tau * (a + M @ x) - np.einsum("sii->s", PE) + np.einsum("sii->s", CE)
            hess = tau * M + np.einsum("sij,tji->st", PE, PE) + np.einsum("sij,tji->st", CE, CE)
            dx = _newton_step(grad, hess, trace)
            slope = grad @ dx
            if -slope < 1e-12:
                break
            step, f0 = 1.0, merit(x, tau)
            while step > 1e-14 and (not feasible(x + step * dx) or merit(x + step * dx, tau) > f0 + 0.25 * step * slope):
                step *= 0.5
            x = x + step * dx
            if trace is not None:
                # the KKT solve is ill-conditioned at large tau; restore the trace exactly
                x = x + trace * (total - trace @ x) / (trace @ trace)
        tau *= 10.0
    return _polish(a, M, basis, matrix(x), total)


def _polish(a, M, basis, delta, total, snap=1e-7):
    """Exact minimizer on the face {eigenvalues near 0 or 1 held there}, if admissible."""
    w, U = np.linalg.eigh(delta)
    full, empty = w > 1 - snap, w < snap
    free = ~(full | empty)
    Uf = U[:, free]
    fixed = U[:, full] @ U[:, full].T
    r = int(free.sum())
    if r == 0:
        if total is not None and abs(full.sum() - total) > 1e-9:
            return delta
        return fixed
    # delta = fixed + Uf X Uf^T with X symmetric r x r
    sub = _symmetric_basis(r)
    lift = np.einsum("ia,sab,jb->sij", Uf, sub, Uf)
    coords = np.einsum("tij,sij->st", basis, lift)  # lifted basis in the outer coordinates
    x_fixed = np.einsum("sij,ij->s", basis, fixed)
    g = coords @ (a + M @ x_fixed)
    H = coords @ M @ coords.T
    if total is None:
        y = np.linalg.lstsq(H, -g, rcond=1e-13)[0]
    else:
        tr = np.einsum("sii->s", sub)
        p = len(g)
        K = np.zeros((p + 1, p + 1))
        K[:p, :p] = H
        K[:p, p] = K[p, :p] = tr
        rhs = np.append(-g, total - float(full.sum()))
        y = np.linalg.lstsq(K, rhs, rcond=1e-13)[0][:p]
    X = np.einsum("s,sab->ab", y, sub)
    wx = np.linalg.eigvalsh(X)
    if wx.min() < -1e-9 or wx.max() > 1 + 1e-9:
        return delta
    polished = fixed + Uf @ X @ Uf.T
    x_old = np.einsum("sij,ij->s", basis, delta)
    x_new = np.einsum("sij,ij->s", basis, polished)

    def value(v):
        return a @ v + 0.5 * v @ M @ v

    return polished if value(x_new) <= value(x_old) + 1e-14 * max(1.0, abs(value(x_old))) else delta


def _pin_fermi_cluster(lam, psi, filling: Filling, mode, V: GridField, mu: GridField, k: KernelSpec, opts: SCFOptions):
    """Re-optimize the occupation of the levels closest to the Fermi level.

    The levels within ``pinning_window`` of the Fermi level (at most
    ``pinning_max_levels``) span a small subspace; every lower level stays
    filled.  The occupation operator delta on that subspace (symmetric,
    0 <= delta <= 1, fixed trace for canonical runs) is chosen to minimize
    the energy with the orbitals frozen, and the cluster orbitals are
    rotated to diagonalize it.  Levels that hybridize or are pinned at the
    Fermi level then receive the occupations of the minimizer instead of
    flipping between filled and empty from one iteration to the next.

    Returns ``(orbitals, Filling)``.
    """
    eF = filling.fermi_level
    if opts.pinning_window <= 0 or lam.size == 0:
        return psi, filling
    near = np.nonzero(np.abs(lam - eF) <= opts.pinning_window)[0]
    if near.size == 0:
        return psi, filling
    if near.size > opts.pinning_max_levels:
        near = np.sort(near[np.argsort(np.abs(lam[near] - eF), kind="stable")[: opts.pinning_max_levels]])
    occ = filling.occupations
    lo, hi = near[0], near[-1]
    if np.any(occ[:lo] < 1) or np.any(occ[hi + 1 :] > 0):
        return psi, filling
    canonical = isinstance(mode, FixedCount)
    total = float(occ[lo : hi + 1].sum()) if canonical else None
    if canonical and near.size == 1:
        return psi, filling
    g = mu.grid
    c = psi[lo : hi + 1].reshape(near.size, -1)
    m = near.size
    basis = _symmetric_basis(m)
    # densities of the basis operators: rho[E](x) = sum_ij E_ij c_i(x) conj(c_j(x))
    pair = np.einsum("ix,jx->ijx", c, c.conj()).real
    dens = np.einsum("sij,ijx->sx", basis, pair)
    mult = yukawa_multiplier(k, g).ravel()
    modes = np.array([to_fourier(GridField(g, r.reshape(g.shape))).ravel() for r in dens])
    below = np.sum(np.abs(psi[:lo]) ** 2, axis=0) if lo > 0 else np.zeros(g.shape)
    f0 = to_fourier(GridField(g, below) - mu).ravel()
    M = np.real(np.einsum("sk,k,tk->st", modes.conj(), mult, modes))
    M = 0.5 * (M + M.T)
    kinetic = np.diag(lam[lo : hi + 1]) - g.cell_volume * np.einsum("ix,x,jx->ij", c.conj(), V.values.ravel(), c).real
    A = 0.5 * (kinetic + kinetic.T)
    if not canonical:
        A = A - eF * np.eye(m)
    a = np.einsum("sij,ij->s", basis, A) + np.real(np.einsum("sk,k,k->s", modes, mult, f0.conj()))
    delta = _cluster_qp(a, M, basis, total)
    w, U = np.linalg.eigh(delta)
    w = np.clip(w, 0.0, 1.0)
    rotated = (U.T @ c).reshape((m, *g.shape))
    new_psi = np.concatenate([psi[:lo], rotated, psi[hi + 1 :]])
    new_occ = np.concatenate([occ[:lo], w, occ[hi + 1 :]])
    fractional = int(np.count_nonzero((w > 1e-12) & (w < 1 - 1e-12)))
    return new_psi, Filling(new_occ, filling.fermi_level, filling.bracket, max(filling.n_degenerate, fractional))


def _aufbau(rho: GridField, mu: GridField, k: KernelSpec, mode, opts: SCFOptions, n_hint: int | None = None):
    V = yukawa_potential(rho - mu, k)
    H = build_hamiltonian(V)
    lam, psi = _lowest_states(H, mode, opts, n_hint)
    psi, filling = _pin_fermi_cluster(lam, psi, fill_states(lam, mode, opts.deg_tol), mode, V, mu, k, opts)
    return lam, psi, filling


def _occupied_state(grid, lam, psi, filling) -> DensityMatrix:
    keep = filling.occupations > 0
    return DensityMatrix(grid, psi[keep], filling.occupations[keep])


def _check_inputs(mu: GridField, k: KernelSpec, mode):
    if k.d != mu.grid.d:
        raise ValueError("kernel and grid dimensions differ")
    if np.any(mu.values < 0):
        raise ValueError("nuclear density must be non-negative")
    if k.m == 0:
        if not isinstance(mode, FixedCount):
            raise ValueError("m = 0 needs canonical filling with N_e equal to the nuclear charge")
        charge = mu.integral()
        if abs(mode.n_electrons - charge) > 1e-8 * max(1.0, charge):
            raise ValueError(f"m = 0 needs a neutral system: N_e = {mode.n_electrons}, charge = {charge}")
    if isinstance(mode, FixedCount) and mode.n_electrons > mu.grid.size:
        raise ValueError(f"N_e = {mode.n_electrons} exceeds the number of basis states {mu.grid.size}")


def _initial_density(mu: GridField, mode, opts: SCFOptions) -> GridField:
    if opts.init == "mu":
        return mu
    if isinstance(mode, FixedCount):
        return GridField.constant(mu.grid, mode.n_electrons / mu.grid.volume)
    return GridField.constant(mu.grid, mu.mean())


class _Anderson:
    """Anderson (Pulay) extrapolation on the density residual."""

    def __init__(self, depth: int, alpha: float):
        self.depth = depth
        self.alpha = alpha
        self.x: list[np.ndarray] = []
        self.r: list[np.ndarray] = []

    def step(self, x: np.ndarray, fx: np.ndarray) -> np.ndarray:
        r = fx - x
        self.x.append(x.ravel())
        self.r.append(r.ravel())
        if len(self.x) > self.depth:
            self.x.pop(0)
            self.r.pop(0)
        if len(self.x) == 1:
            return x + self.alpha * r
        R = np.array(self.r)
        B = R @ R.T
        n = len(self.r)
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = B
        A[:n, n] = A[n, :n] = 1.0
        rhs = np.zeros(n + 1)
        rhs[n] = 1.0
        c = np.linalg.lstsq(A, rhs, rcond=None)[0][:n]
        X = np.array(self.x)
        return (c @ (X + self.alpha * R)).reshape(x.shape)


def scf_solve(mu: GridField, k: KernelSpec, mode, opts: SCFOptions | None = None, rho0: GridField | None = None) -> SCFResult:
    """Damped fixed-point iteration for the supercell rHF problem.

    rho_{n+1} = (1 - alpha) rho_n + alpha rho[fill(H[V(rho_n - mu)])], stopped
    when ||rho_{n+1} - rho_n||_{L^2} / L^{d/2} <= tol.  The returned state is
    the Aufbau state of the last Hamiltonian, and ``density`` is its density.
    Levels near the Fermi level are re-occupied by ``_pin_fermi_cluster``
    unless ``opts.pinning_window`` is 0.
    """
    opts = opts or SCFOptions()
    _check_inputs(mu, k, mode)
    grid = mu.grid
    vol_sqrt = math.sqrt(grid.volume)
    rho = rho0 if rho0 is not None else _initial_density(mu, mode, opts)
    mixer = _Anderson(opts.anderson_depth, opts.alpha) if opts.anderson else None
    history: list[float] = []
    initial_energy = None
    converged = False
    n_hint = None
    for it in range(1, opts.max_iter + 1):
        lam, psi, filling = _aufbau(rho, mu, k, mode, opts, n_hint)
        n_hint = len(lam) + 4
        dm = _occupied_state(grid, lam, psi, filling)
        rho_out = density_of(dm)
        if initial_energy is None:
            initial_energy = total_energy(dm, mu, k, filling.fermi_level)
        if mixer is None:
            new_values = (1 - opts.alpha) * rho.values + opts.alpha * rho_out.values
        else:
            new_values = mixer.step(rho.values, rho_out.values)
        # the linear-mixing step alpha (rho_out - rho); with Anderson mixing
        # the actual step can stall while rho_out - rho is still large
        step = opts.alpha * (rho_out.values - rho.values)
        residual = float(np.linalg.norm(step) * math.sqrt(grid.cell_volume) / vol_sqrt)
        history.append(residual)
        if residual <= opts.tol:
            converged = True
            break
        rho = GridField(grid, new_values)
    energy = total_energy(dm, mu, k, filling.fermi_level)
    return SCFResult(
        density=rho_out,
        dm=dm,
        energy=energy,
        residual_history=tuple(history),
        converged=converged,
        iterations=it,
        mode=mode,
        eigenvalues=lam,
        fermi_bracket=filling.bracket,
        n_degenerate=filling.n_degenerate,
        initial_energy=initial_energy,
        tol=opts.tol,
        grand_canonical=isinstance(mode, FixedFermi),
    )


def refill(density: GridField, mu: GridField, k: KernelSpec, mode, opts: SCFOptions | None = None) -> DensityMatrix:
    """Aufbau state of the mean-field Hamiltonian generated by ``density``,
    filled exactly as the solver fills it."""
    opts = opts or SCFOptions()
    lam, psi, filling = _aufbau(density, mu, k, mode, opts)
    return _occupied_state(density.grid, lam, psi, filling)


def verify_self_consistency(res: SCFResult, mu: GridField, k: KernelSpec, opts: SCFOptions | None = None) -> float:
    """Per-volume L^2 distance between res.density and the density of its refilled Hamiltonian.

    Grand-canonical runs are refilled at ``res.energy.fermi_level``;
    canonical runs with the same electron count, which fills every level
    below that Fermi level and splits the level at it as the solver did.
    """
    mode = res.mode if isinstance(res.mode, FixedCount) else FixedFermi(res.energy.fermi_level)
    again = density_of(refill(res.density, mu, k, mode, opts))
    return (again - res.density).norm() / math.sqrt(mu.grid.volume)


def free_gas_state(grid: GridSpec, n_electrons: int) -> DensityMatrix:
    """Plane-wave Fermi sea holding ``n_electrons`` (closed or open shell).

    Modes are filled by increasing |K|^2; a partially filled shell is split
    equally, so the density is exactly uniform.
    """
    n = grid.n
    idx = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    mesh = np.array(np.meshgrid(*([idx] * grid.d), indexing="ij")).reshape(grid.d, -1).T
    k2 = np.sum((2 * np.pi / grid.L * mesh) ** 2, axis=1)
    order = np.argsort(k2, kind="stable")
    lam = k2[order]
    filling = fill_states(lam, FixedCount(n_electrons))
    keep = np.nonzero(filling.occupations > 0)[0]
    coords = grid.coordinates()
    orbitals = []
    for i in keep:
        K = 2 * np.pi / grid.L * mesh[order[i]]
        phase = sum(K[a] * coords[a] for a in range(grid.d))
        orbitals.append(np.exp(1j * phase) / math.sqrt(grid.volume))
    return DensityMatrix(grid, np.array(orbitals).reshape((-1, *grid.shape)), filling.occupations[keep])
