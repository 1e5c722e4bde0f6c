"""Discretized model space: grid, dyadic cell hierarchy, densities and potentials.

The continuum is replaced by a one-dimensional hard-wall box of length ``L``
sampled at ``M`` interior points.  Cells of level ``n`` are ``2**n`` equal
contiguous blocks of grid points; the deepest level is the grid itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

__all__ = [
    "Grid",
    "ScaleHierarchy",
    "FineDensity",
    "CoarseDensity",
    "Potential",
    "VonWeizsackerReport",
    "project",
    "embed",
    "norm_lp",
    "inner",
    "discrete_gradient",
    "root_density_seminorm",
    "von_weizsacker",
    "von_weizsacker_report",
]


@dataclass(frozen=True)
class Grid:
    """Uniform Dirichlet grid with ``points`` interior nodes on ``(0, length)``."""

    length: float
    points: int

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"box length must be positive, got {self.length}")
        m = int(self.points)
        if m != self.points or m < 16 or m & (m - 1):
            raise ValueError(f"points must be a power of two >= 16, got {self.points}")

    @property
    def spacing(self) -> float:
        return self.length / (self.points + 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.spacing * np.arange(1, self.points + 1)


@dataclass(frozen=True)
class ScaleHierarchy:
    """Nested dyadic partitions of a grid.

    Level ``n`` has ``2**n`` cells of ``points / 2**n`` grid points each.
    Levels run from 0 (one cell) to ``depth`` (one point per cell).
    """

    grid: Grid

    @property
    def depth(self) -> int:
        return int(self.grid.points).bit_length() - 1

    @property
    def levels(self) -> range:
        return range(self.depth + 1)

    def check_level(self, n: int) -> int:
        if int(n) != n or not 0 <= n <= self.depth:
            raise ValueError(f"level {n} outside hierarchy range 0..{self.depth}")
        return int(n)

    def n_cells(self, n: int) -> int:
        return 2 ** self.check_level(n)

    def points_per_cell(self, n: int) -> int:
        return self.grid.points // self.n_cells(n)

    def cell_width(self, n: int) -> float:
        """Width of every level-``n`` cell (the diameter ``D_n``)."""
        return self.points_per_cell(n) * self.grid.spacing

    def widths(self, n: int) -> np.ndarray:
        return np.full(self.n_cells(n), self.cell_width(n))

    def cell_of_point(self, n: int) -> np.ndarray:
        """Index of the level-``n`` cell that contains each grid point."""
        return np.arange(self.grid.points) // self.points_per_cell(n)

    def cell_centers(self, n: int) -> np.ndarray:
        return self.grid.x.reshape(self.n_cells(n), -1).mean(axis=1)

    def cell_edges(self, n: int) -> np.ndarray:
        """Left and right edges, each half a spacing outside the extreme points."""
        h = self.grid.spacing
        starts = self.grid.x[:: self.points_per_cell(n)] - h / 2
        return np.append(starts, self.grid.x[-1] + h / 2)


@dataclass(frozen=True, eq=False)
class FineDensity:
    """Grid-resolved density, units of 1/length."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.points,):
            raise ValueError(f"expected {self.grid.points} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def particle_count(self) -> float:
        return float(self.grid.spacing * self.values.sum())

    @property
    def is_proper(self) -> bool:
        return bool(np.all(self.values >= 0))

    def normalized(self, n_particles: float) -> "FineDensity":
        return FineDensity(self.grid, self.values * (n_particles / self.particle_count))

    def __add__(self, other: "FineDensity") -> "FineDensity":
        return FineDensity(self.grid, self.values + other.values)

    def __sub__(self, other: "FineDensity") -> "FineDensity":
        return FineDensity(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "FineDensity":
        return FineDensity(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class CoarseDensity:
    """Cell-averaged (quasi-)density at one level of the hierarchy.

    Sign-mixed averages are allowed; they describe density perturbations.
    """

    hierarchy: ScaleHierarchy
    level: int
    averages: np.ndarray

    def __post_init__(self):
        n = self.hierarchy.check_level(self.level)
        averages = np.array(self.averages, dtype=float)
        if averages.shape != (2**n,):
            raise ValueError(f"level {n} needs {2**n} cell averages, got shape {averages.shape}")
        if not np.all(np.isfinite(averages)):
            raise ValueError("cell averages must be finite")
        averages.setflags(write=False)
        object.__setattr__(self, "averages", averages)
        object.__setattr__(self, "level", n)

    @property
    def widths(self) -> np.ndarray:
        return self.hierarchy.widths(self.level)

    @property
    def populations(self) -> np.ndarray:
        """Number of particles in each cell."""
        return self.averages * self.widths

    @property
    def particle_count(self) -> float:
        return float(self.populations.sum())

    def in_plus(self) -> bool:
        return bool(np.all(self.averages >= 0))

    def is_interior(self) -> bool:
        return bool(np.all(self.averages > 0))

    def l1_norm(self) -> float:
        return float(np.abs(self.averages) @ self.widths)

    def _like(self, averages) -> "CoarseDensity":
        return CoarseDensity(self.hierarchy, self.level, averages)

    def __add__(self, other: "CoarseDensity") -> "CoarseDensity":
        _check_same_level(self, other)
        return self._like(self.averages + other.averages)

    def __sub__(self, other: "CoarseDensity") -> "CoarseDensity":
        _check_same_level(self, other)
        return self._like(self.averages - other.averages)

    def __mul__(self, scalar: float) -> "CoarseDensity":
        return self._like(self.averages * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Potential:
    """Cell-wise constant external potential.

    ``gauge_offset`` records the constant already added to ``values``.
    """

    hierarchy: ScaleHierarchy
    level: int
    values: np.ndarray
    gauge_offset: float = field(default=0.0)

    def __post_init__(self):
        n = self.hierarchy.check_level(self.level)
        values = np.array(self.values, dtype=float)
        if values.shape != (2**n,):
            raise ValueError(f"level {n} needs {2**n} cell values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("potential values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "level", n)

    @classmethod
    def zeros(cls, hierarchy: ScaleHierarchy, level: int) -> "Potential":
        return cls(hierarchy, level, np.zeros(hierarchy.n_cells(level)))

    @classmethod
    def from_function(cls, hierarchy: ScaleHierarchy, level: int, func) -> "Potential":
        """Cell averages of ``func`` sampled on the grid."""
        samples = np.asarray(func(hierarchy.grid.x), dtype=float)
        return cls(hierarchy, level, samples.reshape(hierarchy.n_cells(level), -1).mean(axis=1))

    def on_grid(self) -> np.ndarray:
        return np.repeat(self.values, self.hierarchy.points_per_cell(self.level))

    def refine(self, level: int) -> "Potential":
        """Same step function expressed on a finer level."""
        level = self.hierarchy.check_level(level)
        if level < self.level:
            raise ValueError("cannot refine to a coarser level")
        reps = 2 ** (level - self.level)
        return Potential(self.hierarchy, level, np.repeat(self.values, reps), self.gauge_offset)

    def shifted(self, constant: float) -> "Potential":
        return Potential(
            self.hierarchy, self.level, self.values + constant, self.gauge_offset + constant
        )

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __add__(self, other: "Potential") -> "Potential":
        if other.level != self.level:
            hi = max(self.level, other.level)
            return self.refine(hi) + other.refine(hi)
        return Potential(self.hierarchy, self.level, self.values + other.values)

    def __sub__(self, other: "Potential") -> "Potential":
        return self + other * -1.0

    def __mul__(self, scalar: float) -> "Potential":
        return Potential(self.hierarchy, self.level, self.values * float(scalar))

    __rmul__ = __mul__


Density = Union[FineDensity, CoarseDensity]


def _check_same_level(a: CoarseDensity, b: CoarseDensity) -> None:
    if a.level != b.level or a.hierarchy != b.hierarchy:
        raise ValueError("densities live on different levels or hierarchies")


def project(rho: FineDensity, n: int, hierarchy: ScaleHierarchy | None = None) -> CoarseDensity:
    """Cell averages of a fine density over the level-``n`` partition."""
    hierarchy = hierarchy or ScaleHierarchy(rho.grid)
    if hierarchy.grid != rho.grid:
        raise ValueError("density grid does not match hierarchy")
    n = hierarchy.check_level(n)
    # equal cells: the cell integral over its width is the plain mean
    averages = rho.values.reshape(2**n, -1).mean(axis=1)
    return CoarseDensity(hierarchy, n, averages)


def coarsen(rho: CoarseDensity, n: int) -> CoarseDensity:
    """Re-average a coarse density onto a coarser level ``n <= rho.level``."""
    n = rho.hierarchy.check_level(n)
    if n > rho.level:
        raise ValueError("coarsen target must not be finer than the density")
    return CoarseDensity(rho.hierarchy, n, rho.averages.reshape(2**n, -1).mean(axis=1))


def embed(rho: CoarseDensity) -> FineDensity:
    """The piecewise-constant fine density with the given cell averages."""
    per_cell = rho.hierarchy.points_per_cell(rho.level)
    return FineDensity(rho.hierarchy.grid, np.repeat(rho.averages, per_cell))


def norm_lp(f: Density, p: float = 1.0) -> float:
    """Lebesgue ``L^p`` norm; coarse inputs are evaluated as step functions."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if isinstance(f, CoarseDensity):
        values, weights = f.averages, f.widths
    else:
        values, weights = f.values, np.full(f.values.size, f.grid.spacing)
    a = np.abs(values)
    if np.isinf(p):
        return float(a.max())
    if p == 1:
        return float(a @ weights)
    return float((a**p @ weights) ** (1.0 / p))


def inner(v: Potential, rho: Density) -> float:
    """Pairing ``∫ v rho`` of a step potential with a density."""
    if isinstance(rho, FineDensity):
        if rho.grid != v.hierarchy.grid:
            raise ValueError("potential and density use different grids")
        coarse = project(rho, v.level, v.hierarchy)
    else:
        if rho.hierarchy != v.hierarchy:
            raise ValueError("potential and density use different hierarchies")
        if v.level > rho.level:
            raise ValueError(
                f"level-{v.level} potential cannot be paired with a level-{rho.level} density"
            )
        coarse = coarsen(rho, v.level)
    return float(v.values @ coarse.populations)


def discrete_gradient(rho: FineDensity) -> np.ndarray:
    """Central differences inside, one-sided first-order stencils at the walls."""
    return np.gradient(rho.values, rho.grid.spacing, edge_order=1)


def root_density_seminorm(rho: FineDensity) -> float:
    """Squared ``H^1`` seminorm of ``sqrt(rho)``, with the walls as zero boundary values.

    Uses forward differences over every link of the grid including the two wall
    links, which is the quadratic form of the 3-point Laplacian.
    """
    if np.any(rho.values < 0):
        raise ValueError("seminorm needs a non-negative density")
    root = np.sqrt(np.concatenate(([0.0], rho.values, [0.0])))
    return float(np.sum(np.diff(root) ** 2) / rho.grid.spacing)


@dataclass(frozen=True)
class VonWeizsackerReport:
    value: float
    gradient_form: float
    discrepancy: float


def von_weizsacker(rho: FineDensity) -> float:
    """Von Weizsäcker kinetic energy ``(1/2) ∫ |∇ sqrt(rho)|^2`` (units ħ = m = 1).

    Exactly the kinetic expectation of the one-particle state ``sqrt(rho h)``
    under the grid Laplacian.  Returns ``inf`` where the density vanishes with a
    non-zero gradient.
    """
    return von_weizsacker_report(rho).value


def von_weizsacker_report(rho: FineDensity) -> VonWeizsackerReport:
    values = rho.values
    if np.any(values < 0):
        raise ValueError("von Weizsäcker energy needs a non-negative density")
    grad = discrete_gradient(rho)
    zero = values == 0
    if np.any(zero & (grad != 0)):
        return VonWeizsackerReport(np.inf, np.inf, np.nan)
    safe = np.where(zero, 1.0, values)
    gradient_form = float(rho.grid.spacing * np.sum(np.where(zero, 0.0, grad**2 / (8 * safe))))
    value = 0.5 * root_density_seminorm(rho)
    scale = max(abs(value), np.finfo(float).tiny)
    return VonWeizsackerReport(value, gradient_form, abs(value - gradient_form) / scale)
