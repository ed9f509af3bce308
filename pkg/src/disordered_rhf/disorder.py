"""Random nuclear charge distributions on the cubic lattice.

A configuration places one smooth nucleus per unit cell,

    mu(x) = sum_k q_k chi_w(x - k - eta_k),

with i.i.d. charges ``q_k`` drawn from a finite law and i.i.d. displacements
``eta_k`` uniform on the cube ``[-r_disp, r_disp]^d``.

Random source
-------------
Every site draws from its own counter-based stream: ``numpy.random.Philox``
with ``key = seed`` and counter ``(0, k_1, k_2, k_3)`` (site coordinates as
two's-complement 64-bit words, absent axes 0).  The first ``1 + d`` doubles of
that stream give the charge (inverse CDF of the charge law) and then the
displacement components.  A site's data therefore depend only on
``(seed, k)``: boxes of different sizes, or windows translated by a lattice
vector, are restrictions of one infinite configuration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .spectral import SPHERE_MEASURE, GridField, GridSpec


@dataclass(frozen=True)
class DisorderParams:
    dimension: int
    charges: tuple[tuple[float, float], ...] = ((1.0, 1.0),)
    r_disp: float = 0.0
    half_width: float = 0.25

    def __post_init__(self):
        charges = tuple((float(q), float(p)) for q, p in self.charges)
        object.__setattr__(self, "charges", charges)
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if not charges:
            raise ValueError("charge law is empty")
        if any(q < 0 for q, _ in charges):
            raise ValueError("charges must be non-negative")
        if any(p < 0 for _, p in charges):
            raise ValueError("probabilities must be non-negative")
        total = sum(p for _, p in charges)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"charge probabilities sum to {total!r}, not 1")
        if self.r_disp < 0:
            raise ValueError("displacement radius must be >= 0")
        if not 0 < self.half_width <= 0.5:
            raise ValueError("bump half-width must lie in (0, 1/2]")
        if self.r_disp + self.half_width > 0.5:
            raise ValueError("r_disp + half_width must not exceed 1/2 (bump must stay inside its cell)")

    @property
    def mean_charge(self) -> float:
        return sum(q * p for q, p in self.charges)

    @property
    def charge_variance(self) -> float:
        mean = self.mean_charge
        return sum(p * (q - mean) ** 2 for q, p in self.charges)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "charges": [list(c) for c in self.charges],
            "r_disp": self.r_disp,
            "half_width": self.half_width,
        }

    @classmethod
    def from_dict(cls, data: dict) -> DisorderParams:
        return cls(
            dimension=int(data["dimension"]),
            charges=tuple(tuple(c) for c in data["charges"]),
            r_disp=float(data.get("r_disp", 0.0)),
            half_width=float(data.get("half_width", 0.25)),
        )


@dataclass(frozen=True, eq=False)
class Realization:
    """One sampled configuration restricted to the box of side ``L``.

    ``charges`` has shape ``(L,)*d`` and ``displacements`` shape
    ``(L,)*d + (d,)``.  Array index ``i`` along an axis is the lattice site
    ``i - L//2 + offset`` (before any cyclic ``shift``).
    """

    params: DisorderParams
    L: int
    seed: int
    charges: np.ndarray
    displacements: np.ndarray
    offset: tuple[int, ...] = ()
    shift: tuple[int, ...] = ()

    def __post_init__(self):
        d = self.params.dimension
        object.__setattr__(self, "offset", tuple(self.offset) or (0,) * d)
        object.__setattr__(self, "shift", tuple(self.shift) or (0,) * d)
        for arr in (self.charges, self.displacements):
            arr.setflags(write=False)

    @property
    def d(self) -> int:
        return self.params.dimension

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    def total_charge(self) -> float:
        return float(self.charges.sum())

    def to_json(self, include_sites: bool = False) -> str:
        data = {
            "params": self.params.to_dict(),
            "L": self.L,
            "seed": self.seed,
            "offset": list(self.offset),
            "shift": list(self.shift),
            "mean_charge_law": self.params.mean_charge,
            "total_charge": self.total_charge(),
        }
        if include_sites:
            data["charges"] = self.charges.tolist()
            data["displacements"] = self.displacements.tolist()
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Realization:
        data = json.loads(text)
        params = DisorderParams.from_dict(data["params"])
        real = sample_realization(params, data["L"], data["seed"], offset=data.get("offset"))
        shift = data.get("shift")
        if shift and any(shift):
            real = shift_realization(real, shift)
        return real


def _site_coordinates(L: int, d: int, offset) -> np.ndarray:
    idx = np.arange(L) - L // 2
    grids = np.meshgrid(*([idx] * d), indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1)
    return coords + np.asarray(offset, dtype=np.int64)


def _site_uniforms(seed: int, site: np.ndarray, count: int) -> np.ndarray:
    counter = np.zeros(4, dtype=np.uint64)
    counter[1 : 1 + len(site)] = np.asarray(site, dtype=np.int64).view(np.uint64)
    gen = np.random.Generator(np.random.Philox(counter=counter, key=int(seed) & 0xFFFFFFFFFFFFFFFF))
    return gen.random(count)


def sample_realization(params: DisorderParams, L: int, seed: int, offset=None) -> Realization:
    """Sample the configuration on ``L^d`` sites, deterministically in ``seed``.

    ``offset`` translates the window: the result holds sites
    ``Gamma_L + offset``.  With ``offset = -k`` this is the box restriction of
    the translated configuration tau_{-k}(omega).
    """
    if int(L) != L or L < 1:
        raise ValueError(f"box side must be a positive integer, got {L}")
    L = int(L)
    d = params.dimension
    offset = tuple(int(o) for o in offset) if offset is not None else (0,) * d
    if len(offset) != d:
        raise ValueError(f"offset must have {d} components")
    sites = _site_coordinates(L, d, offset)
    draws = np.array([_site_uniforms(seed, s, 1 + d) for s in sites])
    values = np.array([q for q, _ in params.charges])
    cdf = np.cumsum([p for _, p in params.charges])
    cdf[-1] = 1.0
    which = np.searchsorted(cdf, draws[:, 0], side="right")
    charges = values[np.minimum(which, len(values) - 1)]
    if params.r_disp > 0:
        disp = params.r_disp * (2.0 * draws[:, 1:] - 1.0)
    else:
        disp = np.zeros((len(sites), d))
    return Realization(
        params=params,
        L=L,
        seed=int(seed),
        charges=charges.reshape((L,) * d),
        displacements=disp.reshape((L,) * d + (d,)),
        offset=offset,
    )


def shift_realization(real: Realization, k) -> Realization:
    """Cyclic analogue of tau_k: site data at i become those at i + k (mod L)."""
    d = real.d
    k = tuple(int(v) for v in np.broadcast_to(np.asarray(k, dtype=int), (d,)))
    axes = tuple(range(d))
    neg = tuple(-v for v in k)
    return Realization(
        params=real.params,
        L=real.L,
        seed=real.seed,
        charges=np.roll(real.charges, neg, axis=axes),
        displacements=np.roll(real.displacements, neg, axis=axes),
        offset=real.offset,
        shift=tuple((s + v) % real.L for s, v in zip(real.shift, k)),
    )


def translated_windows(params: DisorderParams, L: int, seed: int):
    """Yield ``(k, realization of tau_{-k} omega on Gamma_L)`` for every k in Gamma_L."""
    for k in _site_coordinates(L, params.dimension, (0,) * params.dimension):
        yield tuple(int(v) for v in k), sample_realization(params, L, seed, offset=tuple(-k))


def _bump_profile(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def bump_normalization(d: int, w: float) -> float:
    """c_w such that c_w exp(-1/(1 - |x/w|^2)) integrates to one over R^d."""
    radial, _ = integrate.quad(
        lambda r: r ** (d - 1) * math.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200
    )
    return 1.0 / (SPHERE_MEASURE[d] * w**d * radial)


def bump_function(x, w: float) -> np.ndarray:
    """Normalized smooth bump chi_w evaluated at points ``x`` (last axis = coordinates).

    A scalar or 1d array is read as points on the line.
    """
    if not 0 < w <= 0.5:
        raise ValueError("bump half-width must lie in (0, 1/2]")
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        r = np.abs(x) / w
        d = 1
    else:
        r = np.sqrt(np.sum(x**2, axis=-1)) / w
        d = x.shape[-1]
    return bump_normalization(d, float(w)) * _bump_profile(r)


def _origin_node(grid: GridSpec) -> int:
    # node of lattice site -(L//2), i.e. array index 0 of the site arrays
    return grid.N // 2 if grid.L % 2 else 0


def nuclear_density(real: Realization, grid: GridSpec) -> GridField:
    """Sample mu_L = sum_k q_k chi_w(x - k - eta_k) at the grid nodes.

    Each bump lies inside its own cell, so every node receives at most one
    contribution; bumps are evaluated on integer node offsets relative to the
    site, which makes a cyclic shift of the realization an exact roll of the
    field.
    """
    if grid.L != real.L or grid.d != real.d:
        raise ValueError(f"grid {grid} does not match realization (L={real.L}, d={real.d})")
    d, N, n = grid.d, grid.N, grid.n
    w = real.params.half_width
    c_w = bump_normalization(d, float(w))
    local = np.arange(-N // 2, N // 2)
    local_nodes = np.meshgrid(*([local] * d), indexing="ij")
    values = np.zeros(grid.shape)
    start = _origin_node(grid)
    for site in np.ndindex(*real.charges.shape):
        q = real.charges[site]
        if q == 0:
            continue
        eta = real.displacements[site]
        r2 = np.zeros(local_nodes[0].shape)
        for axis in range(d):
            r2 = r2 + (local_nodes[axis] / N - eta[axis]) ** 2
        bump = q * c_w * _bump_profile(np.sqrt(r2) / w)
        index = np.ix_(*[(start + N * site[axis] + local) % n for axis in range(d)])
        values[index] += bump
    return GridField(grid, values)


def charge_defect(real: Realization, mu: GridField) -> float:
    """Grid quadrature of mu minus the exact total charge (bump quadrature error)."""
    return mu.integral() - real.total_charge()


def uniform_density(grid: GridSpec, density: float) -> GridField:
    """Constant nuclear background (perfect jellium-like crystal)."""
    if density < 0:
        raise ValueError("density must be non-negative")
    return GridField.constant(grid, density)
