"""Plane-wave (Fourier collocation) discretization of a periodic box.

The box is ``[-L/2, L/2)^d`` with ``N`` nodes per unit length along each
axis, so a field is an array of shape ``(N*L,)*d``.  Fourier coefficients
follow the convention

    c_K(f) = L^{-d/2} \\int_{box} f(x) exp(-i K.x) dx,   K in (2 pi / L) Z^d,

approximated by the rectangle rule on the grid (exact for trigonometric
polynomials resolved by the grid).  With this convention the discrete
Parseval identity ``h^d sum |f|^2 == sum_K |c_K|^2`` holds exactly.

Nyquist modes: the kinetic and Yukawa multipliers use |K|^2 evaluated at the
(negative) Nyquist frequency returned by ``numpy.fft.fftfreq``.  Both
multipliers are even in K, so a real field stays real; the imaginary round-off
is discarded after every multiplier application.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy import special

# |S^{d-1}|: measure of the unit sphere
SPHERE_MEASURE = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}

DENSE_MAX = 6000


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid over the box of side ``L`` in dimension ``d``."""

    d: int
    L: int
    N: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"box side L must be a positive integer, got {self.L}")
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise ValueError(f"points per unit cell N must be an even integer >= 4, got {self.N}")

    @property
    def n(self) -> int:
        """Nodes per axis."""
        return self.N * self.L

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def volume(self) -> float:
        return float(self.L**self.d)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L / 2 + np.arange(self.n) / self.N

    def coordinates(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """1d array of K values (2 pi / L) * n in fft order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def k_squared(self) -> np.ndarray:
        k2 = self.wavenumbers**2
        out = np.zeros(self.shape)
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.n
            out = out + k2.reshape(shape)
        return out

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(-i K x_0) with x_0 = -L/2 is (-1)^n for K = 2 pi n / L
        idx = np.rint(np.fft.fftfreq(self.n, d=1.0 / self.n)).astype(int)
        sign = np.where(idx % 2 == 0, 1.0, -1.0)
        out = np.ones(self.shape)
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.n
            out = out * sign.reshape(shape)
        return out


@dataclass(frozen=True, eq=False)
class GridField:
    """A real function sampled at the nodes of a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {values.size}")
        values = values.reshape(self.grid.shape)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def integral(self) -> float:
        return float(self.grid.cell_volume * self.values.sum())

    def mean(self) -> float:
        return self.integral() / self.grid.volume

    def inner(self, other: GridField) -> float:
        _check_same_grid(self, other)
        return float(self.grid.cell_volume * np.sum(self.values * other.values))

    def norm(self) -> float:
        return math.sqrt(self.inner(self))

    def __add__(self, other: GridField) -> GridField:
        _check_same_grid(self, other)
        return GridField(self.grid, self.values + other.values)

    def __sub__(self, other: GridField) -> GridField:
        _check_same_grid(self, other)
        return GridField(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> GridField:
        return GridField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def roll_cells(self, k) -> GridField:
        """Return x -> f(x + k) for a lattice vector ``k`` (periodic wrap)."""
        k = np.broadcast_to(np.asarray(k, dtype=int), (self.grid.d,))
        shift = tuple(-self.grid.N * int(kj) for kj in k)
        return GridField(self.grid, np.roll(self.values, shift, axis=tuple(range(self.grid.d))))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> GridField:
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def zeros(cls, grid: GridSpec) -> GridField:
        return cls.constant(grid, 0.0)


def _check_same_grid(a: GridField, b: GridField):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass(frozen=True)
class KernelSpec:
    """Yukawa interaction of mass ``m`` in dimension ``d``.

    ``jellium=True`` drops the K = 0 mode, i.e. the charge is compensated by a
    uniform background.  ``m = 0`` (Coulomb) is only meaningful in that case.
    """

    m: float
    d: int
    jellium: bool = False

    def __post_init__(self):
        if self.m < 0:
            raise ValueError(f"Yukawa mass must be >= 0, got {self.m}")
        if self.d not in SPHERE_MEASURE:
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.m == 0 and not self.jellium:
            raise ValueError("m = 0 requires jellium compensation (jellium=True)")

    @property
    def sphere(self) -> float:
        return SPHERE_MEASURE[self.d]

    @classmethod
    def for_mass(cls, m: float, d: int) -> KernelSpec:
        """Yukawa kernel for m > 0, jellium-compensated Coulomb kernel for m = 0."""
        return cls(m=float(m), d=d, jellium=(m == 0))


def to_fourier(f: GridField) -> np.ndarray:
    """Fourier coefficients c_K(f), arranged in fft order."""
    g = f.grid
    scale = g.cell_volume / g.L ** (g.d / 2)
    return scale * g._phase * np.fft.fftn(f.values)


def from_fourier(modes: np.ndarray, grid: GridSpec) -> GridField:
    """Inverse of :func:`to_fourier`; the imaginary part is discarded."""
    scale = grid.L ** (grid.d / 2) / grid.cell_volume
    values = np.fft.ifftn(np.asarray(modes) * grid._phase * scale)
    return GridField(grid, values.real)


def yukawa_multiplier(k: KernelSpec, grid: GridSpec) -> np.ndarray:
    """|S^{d-1}| / (|K|^2 + m^2) on the mode grid (zero mode removed for jellium)."""
    if k.d != grid.d:
        raise ValueError(f"kernel dimension {k.d} does not match grid dimension {grid.d}")
    denom = grid.k_squared + k.m**2
    mult = np.zeros(grid.shape)
    nz = denom > 0
    mult[nz] = k.sphere / denom[nz]
    if k.jellium:
        mult.flat[0] = 0.0
    return mult


def yukawa_energy(f: GridField, g: GridField, k: KernelSpec) -> float:
    """Bilinear Yukawa energy D_{m,L}(f, g) as a mode sum."""
    _check_same_grid(f, g)
    mult = yukawa_multiplier(k, f.grid)
    cf = to_fourier(f)
    cg = cf if g is f else to_fourier(g)
    return float(np.sum(mult * np.conj(cf) * cg).real)


def yukawa_potential(f: GridField, k: KernelSpec) -> GridField:
    """Potential V with c_K(V) = |S^{d-1}| / (|K|^2 + m^2) c_K(f)."""
    return periodic_convolution(yukawa_multiplier(k, f.grid), f)


def periodic_convolution(Wmodes: np.ndarray, f: GridField) -> GridField:
    """Apply the Fourier multiplier ``Wmodes`` (fft order) to ``f``."""
    Wmodes = np.asarray(Wmodes)
    if Wmodes.shape != f.grid.shape:
        raise ValueError(f"multiplier shape {Wmodes.shape} does not match grid {f.grid.shape}")
    # the (+-1) phase of to_fourier squares to one, so it cancels here
    return GridField(f.grid, np.fft.ifftn(Wmodes * np.fft.fftn(f.values)).real)


def yukawa_kernel(r: np.ndarray, m: float, d: int) -> np.ndarray:
    """Free-space Yukawa kernel Y_m(r) for m > 0."""
    r = np.asarray(r, dtype=float)
    if d == 1:
        return np.exp(-m * r) / m
    if d == 2:
        return special.k0(m * r)
    if d == 3:
        return np.exp(-m * r) / r
    raise ValueError(f"unsupported dimension {d}")


def _origin_cell_average(m: float, grid: GridSpec) -> float:
    # average of Y_m over a ball with the volume of one grid cell
    h, d = grid.h, grid.d
    if d == 2:
        a = h / math.sqrt(math.pi)
        return 2.0 / (m * a) ** 2 * (1.0 - m * a * special.k1(m * a))
    a = h * (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0)
    return 3.0 / (a**3 * m**2) * (1.0 - math.exp(-m * a) * (1.0 + m * a))


def real_space_kernel(k: KernelSpec, grid: GridSpec) -> GridField:
    """Periodized kernel Y_{m,L}(x) = sum_n Y_m(x - nL) tabulated on the grid.

    The image sum is truncated once exp(-m r) < 1e-16.  In d = 2, 3 the node at
    the origin, where Y_m is singular, holds the kernel averaged over a ball of
    one grid-cell volume.
    """
    if k.m <= 0:
        raise ValueError("real-space kernel needs m > 0 (no convergent lattice sum at m = 0)")
    if k.jellium:
        raise ValueError("real-space kernel is only defined without jellium compensation")
    d, L = grid.d, grid.L
    n_img = int(math.ceil((37.0 / k.m) / L)) + 1
    # node offsets measured from the origin node, as integer multiples of h
    idx = np.arange(grid.n) - grid.n // 2
    offsets = np.meshgrid(*([idx] * d), indexing="ij")
    total = np.zeros(grid.shape)
    images = np.arange(-n_img, n_img + 1)
    for img in np.array(np.meshgrid(*([images] * d), indexing="ij")).reshape(d, -1).T:
        r2 = np.zeros(grid.shape)
        for axis in range(d):
            r2 = r2 + (offsets[axis] * grid.h - img[axis] * L) ** 2
        r = np.sqrt(r2)
        with np.errstate(divide="ignore"):
            y = yukawa_kernel(r, k.m, d)
        if d > 1 and not np.any(img):
            y[(grid.n // 2,) * d] = _origin_cell_average(k.m, grid)
        total += y
    # put the origin at array index 0, matching circular convolution
    total = np.roll(total, (-(grid.n // 2),) * d, axis=tuple(range(d)))
    return GridField(grid, total)


def real_space_potential(f: GridField, k: KernelSpec) -> GridField:
    """Yukawa potential by direct quadrature against the real-space kernel.

    Independent of the Fourier multiplier: circular convolution of the
    tabulated periodized kernel with ``f`` by the rectangle rule.  In d = 1 the
    kernel has a kink at the origin and the rule is corrected by the
    Euler-Maclaurin term ``-h^2 f(x) / 6`` (derivative jump of -2).
    """
    kern = real_space_kernel(k, f.grid)
    axes = tuple(range(f.grid.d))
    conv = np.fft.ifftn(np.fft.fftn(kern.values, axes=axes) * np.fft.fftn(f.values, axes=axes), axes=axes).real
    conv *= f.grid.cell_volume
    if f.grid.d == 1:
        conv -= f.grid.h**2 * f.values / 6.0
    return GridField(f.grid, conv)


def kinetic_multiplier(grid: GridSpec, factor: float = 0.5) -> np.ndarray:
    return factor * grid.k_squared


def gradient(f: GridField) -> list[GridField]:
    """Spectral gradient; Nyquist component set to zero for a real result."""
    g = f.grid
    fk = np.fft.fftn(f.values)
    kvec = g.wavenumbers.copy()
    kvec[g.n // 2] = 0.0
    out = []
    for axis in range(g.d):
        shape = [1] * g.d
        shape[axis] = g.n
        out.append(GridField(g, np.fft.ifftn(1j * kvec.reshape(shape) * fk).real))
    return out


def _laplacian_1d(grid: GridSpec, factor: float) -> np.ndarray:
    col = np.fft.ifft(factor * grid.wavenumbers**2).real
    return scipy.linalg.circulant(col)


class Hamiltonian:
    """H = factor * (-Delta_L) + V in the collocation (grid-node) basis.

    The matrix acts on node values; it is real symmetric.  Eigenvectors are
    returned normalized for the grid quadrature (h^d sum |psi|^2 = 1).
    """

    def __init__(self, V: GridField, kinetic_factor: float = 0.5):
        self.V = V
        self.grid = V.grid
        self.kinetic_factor = kinetic_factor

    @cached_property
    def matrix(self) -> np.ndarray:
        g = self.grid
        t1 = _laplacian_1d(g, self.kinetic_factor)
        eye = np.eye(g.n)
        H = np.zeros((g.size, g.size))
        for axis in range(g.d):
            term = np.ones((1, 1))
            for j in range(g.d):
                term = np.kron(term, t1 if j == axis else eye)
            H += term
        H[np.diag_indices_from(H)] += self.V.values.ravel()
        return H

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Matrix-free application to a field (or stack of fields) on the grid."""
        g = self.grid
        axes = tuple(range(-g.d, 0))
        psi = np.asarray(psi)
        kin = np.fft.ifftn(kinetic_multiplier(g, self.kinetic_factor) * np.fft.fftn(psi, axes=axes), axes=axes)
        if not np.iscomplexobj(psi):
            kin = kin.real
        return kin + self.V.values * psi

    def eigh(self, n_states: int | None = None, method: str = "auto", dense_max: int = DENSE_MAX):
        """Lowest eigenpairs, ascending.

        Returns ``(eigenvalues, orbitals)`` with ``orbitals`` of shape
        ``(n, *grid.shape)``.  ``method`` is ``"dense"``, ``"iterative"`` or
        ``"auto"`` (dense up to ``dense_max`` grid points).
        """
        g = self.grid
        if method == "auto":
            method = "dense" if g.size <= dense_max else "iterative"
        if method == "dense":
            if n_states is None or n_states >= g.size:
                w, v = scipy.linalg.eigh(self.matrix)
            else:
                w, v = scipy.linalg.eigh(self.matrix, subset_by_index=[0, n_states - 1])
        elif method == "iterative":
            if n_states is None:
                raise ValueError("iterative eigensolver needs n_states")
            op = scipy.sparse.linalg.LinearOperator(
                (g.size, g.size), matvec=lambda x: self.apply(x.reshape(g.shape)).ravel(), dtype=float
            )
            v0 = np.ones(g.size)
            w, v = scipy.sparse.linalg.eigsh(op, k=n_states, which="SA", v0=v0, tol=1e-12)
            order = np.argsort(w)
            w, v = w[order], v[:, order]
        else:
            raise ValueError(f"unknown eigensolver {method!r}")
        orbitals = (v.T / math.sqrt(g.cell_volume)).reshape((-1, *g.shape))
        return w, orbitals


def build_hamiltonian(V: GridField, kinetic_factor: float = 0.5) -> Hamiltonian:
    return Hamiltonian(V, kinetic_factor)
