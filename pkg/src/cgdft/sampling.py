"""Test densities and potentials: random smooth ones and a few named shapes."""

from __future__ import annotations

import numpy as np

from .engine import EnsembleState, ModelSpec, density_of, ground_space
from .model import CoarseDensity, FineDensity, Grid, Potential, ScaleHierarchy, project

__all__ = [
    "random_smooth_density",
    "random_interior_density",
    "random_smooth_potential",
    "forward_density",
    "box_ground_density",
    "node_density",
    "flat_top_density",
    "harmonic_density",
    "first_inflection",
    "weak_density",
]


def _envelope(grid: Grid) -> np.ndarray:
    return np.sin(np.pi * grid.x / grid.length) ** 2


def random_smooth_density(
    grid: Grid, n_particles: float, rng: np.random.Generator, modes: int = 4, amplitude: float = 1.0
) -> FineDensity:
    """``sin^2(pi x / L) exp(random cosine series)``, normalized; strictly positive.

    The cosine series has zero slope at the walls, which keeps the
    representing potential bounded there.
    """
    x = grid.x / grid.length
    coeffs = rng.normal(scale=amplitude / np.arange(1, modes + 1))
    series = sum(c * np.cos((k + 1) * np.pi * x) for k, c in enumerate(coeffs))
    return FineDensity(grid, _envelope(grid) * np.exp(series)).normalized(n_particles)


def random_interior_density(
    hierarchy: ScaleHierarchy, level: int, n_particles: float, rng: np.random.Generator, spread: float = 0.5
) -> CoarseDensity:
    """Cell averages uniform in ``[1 - spread, 1 + spread]`` up to normalization."""
    averages = rng.uniform(1 - spread, 1 + spread, hierarchy.n_cells(level))
    averages *= n_particles / (averages @ hierarchy.widths(level))
    return CoarseDensity(hierarchy, level, averages)


def random_smooth_potential(
    hierarchy: ScaleHierarchy, level: int, rng: np.random.Generator, amplitude: float = 10.0, modes: int = 3
) -> Potential:
    """Cell averages of a random cosine series of the given sup-scale."""
    coeffs = rng.normal(scale=amplitude / np.arange(1, modes + 1))
    length = hierarchy.grid.length

    def func(x):
        return sum(c * np.cos((k + 1) * np.pi * x / length) for k, c in enumerate(coeffs))

    return Potential.from_function(hierarchy, level, func)


def forward_density(model: ModelSpec, v: Potential) -> FineDensity:
    """Ground-state density of ``v`` (equal-weight mixture if degenerate)."""
    space = ground_space(model, v)
    k = space.degeneracy
    return density_of(EnsembleState(model, np.full(k, 1.0 / k), space.basis))


def box_ground_density(grid: Grid) -> FineDensity:
    """One particle in the empty box on the grid: proportional to ``sin^2(pi x / L)``."""
    return FineDensity(grid, _envelope(grid)).normalized(1.0)


def node_density(grid: Grid, n_particles: float, node: float = 0.5, regularization: float | None = None) -> FineDensity:
    """Density with a quadratic node, ``(x - x0)^2 + r^2`` times the wall envelope.

    ``regularization`` defaults to one grid spacing so the density stays
    positive at grid resolution.
    """
    r = grid.spacing if regularization is None else regularization
    x0 = node * grid.length
    values = _envelope(grid) * ((grid.x - x0) ** 2 + r**2)
    return FineDensity(grid, values).normalized(n_particles)


def flat_top_density(grid: Grid, n_particles: float, ramp: float = 0.2) -> FineDensity:
    """Uniform in the bulk with ``sin^2`` ramps of width ``ramp * L`` at each wall."""
    x = grid.x / grid.length
    values = np.ones_like(x)
    left, right = x < ramp, x > 1 - ramp
    values[left] = np.sin(0.5 * np.pi * x[left] / ramp) ** 2
    values[right] = np.sin(0.5 * np.pi * (1 - x[right]) / ramp) ** 2
    return FineDensity(grid, values).normalized(n_particles)


def harmonic_density(model: ModelSpec, omega: float = 20.0) -> FineDensity:
    """Ground density of the well ``omega^2 (x - L/2)^2 / 2`` on the grid."""
    grid = model.grid
    v = grid.x - 0.5 * grid.length
    hier = model.hierarchy
    return forward_density(model, Potential(hier, hier.depth, 0.5 * omega**2 * v**2))


def first_inflection(rho: FineDensity) -> float:
    """Leftmost grid point where the second difference of ``rho`` changes sign."""
    second = np.diff(rho.values, 2)
    flips = np.nonzero(np.sign(second[:-1]) * np.sign(second[1:]) < 0)[0]
    if flips.size == 0:
        raise ValueError("density has no inflection point")
    return float(rho.grid.x[flips[0] + 2])


def weak_density(model: ModelSpec, rng: np.random.Generator, level: int = 3, amplitude: float = 2.0) -> CoarseDensity:
    """Coarse ground density of a gentle random potential; its inverse is well conditioned."""
    hier = model.hierarchy
    v0 = random_smooth_potential(hier, level, rng, amplitude=amplitude)
    return project(forward_density(model, v0), level, hier)
