"""Estimator-style wrappers around the functional API.

Rows of ``X`` are densities or potentials sampled on the grid (``M``
columns) or on the cells of one level (``2**level`` columns).  The wrappers
hold only plain parameters, so ``get_params``/``set_params``/``clone`` work.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .duality import lieb_maximize
from .engine import ModelSpec
from .model import CoarseDensity, FineDensity, Grid, Potential, ScaleHierarchy, embed, project
from .sampling import forward_density

__all__ = [
    "check_fine_densities",
    "check_coarse_densities",
    "CoarseGrainer",
    "DensityInverter",
    "GroundStateDensity",
]


def check_fine_densities(X, grid: Grid, n_particles: float | None = None, proper: bool = True) -> np.ndarray:
    """Validate a batch of grid densities: shape, finiteness, sign, normalization."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != grid.points:
        raise ValueError(f"expected {grid.points} columns (grid points), got {X.shape[1]}")
    if proper and np.any(X < 0):
        raise ValueError("densities must be non-negative")
    if n_particles is not None:
        counts = grid.spacing * X.sum(axis=1)
        bad = np.abs(counts - n_particles) > 1e-8 * max(1.0, n_particles)
        if np.any(bad):
            raise ValueError(f"rows {np.nonzero(bad)[0].tolist()} do not integrate to {n_particles}")
    return X


def check_coarse_densities(
    X, hierarchy: ScaleHierarchy, level: int, n_particles: float | None = None, interior: bool = False
) -> np.ndarray:
    """Validate a batch of cell averages at ``level``."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    cells = hierarchy.n_cells(hierarchy.check_level(level))
    if X.shape[1] != cells:
        raise ValueError(f"level {level} has {cells} cells, got {X.shape[1]} columns")
    if interior and np.any(X <= 0):
        raise ValueError("cell averages must be strictly positive")
    if n_particles is not None:
        counts = X @ hierarchy.widths(level)
        if np.any(np.abs(counts - n_particles) > 1e-8 * max(1.0, n_particles)):
            raise ValueError(f"cell averages do not integrate to {n_particles}")
    return X


class _ModelParams(BaseEstimator):
    def _model(self) -> ModelSpec:
        return ModelSpec(Grid(self.length, self.points), self.n_particles, self.strength, self.softening)


class CoarseGrainer(TransformerMixin, BaseEstimator):
    """Grid densities to level-``level`` cell averages and back (piecewise constant)."""

    def __init__(self, level: int = 3, length: float = 1.0, points: int = 128):
        self.level = level
        self.length = length
        self.points = points

    def fit(self, X, y=None):
        grid = Grid(self.length, self.points)
        self.hierarchy_ = ScaleHierarchy(grid)
        self.hierarchy_.check_level(self.level)
        check_fine_densities(X, grid, proper=False)
        self.n_features_in_ = grid.points
        return self

    def transform(self, X):
        check_is_fitted(self, "hierarchy_")
        grid = self.hierarchy_.grid
        X = check_fine_densities(X, grid, proper=False)
        return np.array([project(FineDensity(grid, row), self.level, self.hierarchy_).averages for row in X])

    def inverse_transform(self, X):
        check_is_fitted(self, "hierarchy_")
        X = check_coarse_densities(X, self.hierarchy_, self.level)
        return np.array([embed(CoarseDensity(self.hierarchy_, self.level, row)).values for row in X])


class DensityInverter(TransformerMixin, _ModelParams):
    """Cell averages to gauge-fixed representing potentials.

    ``fit`` inverts each row; ``transform`` inverts new rows, warm-started
    from the mean fitted potential.  ``intrinsic_energy_`` holds ``F`` of the
    fitted rows and ``results_`` the full inversion records.
    """

    def __init__(
        self,
        level: int = 3,
        n_particles: int = 1,
        length: float = 1.0,
        points: int = 128,
        strength: float = 1.0,
        softening: float = 0.5,
        tol: float = 1e-8,
        max_iter: int = 2000,
    ):
        self.level = level
        self.n_particles = n_particles
        self.length = length
        self.points = points
        self.strength = strength
        self.softening = softening
        self.tol = tol
        self.max_iter = max_iter

    def _invert(self, X, warm=None):
        model = self.model_
        hier = model.hierarchy
        X = check_coarse_densities(X, hier, self.level, self.n_particles, interior=True)
        out = []
        for row in X:
            res = lieb_maximize(model, CoarseDensity(hier, self.level, row), tol=self.tol, max_iter=self.max_iter, v_init=warm)
            out.append(res)
        return out

    def fit(self, X, y=None):
        self.model_ = self._model()
        self.results_ = self._invert(X)
        self.intrinsic_energy_ = np.array([r.F_value for r in self.results_])
        self.potentials_ = np.array([r.potential.values for r in self.results_])
        self.converged_ = np.array([r.converged for r in self.results_])
        self.n_features_in_ = self.potentials_.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "results_")
        hier = self.model_.hierarchy
        warm = Potential(hier, self.level, self.potentials_.mean(axis=0))
        return np.array([r.potential.values for r in self._invert(X, warm)])

    def score(self, X, y=None):
        """Negative mean L1 residual of the inversions of ``X``; zero is perfect."""
        check_is_fitted(self, "results_")
        return -float(np.mean([r.residual for r in self._invert(X)]))


class GroundStateDensity(_ModelParams):
    """Forward map: cell potentials to grid ground-state densities (``predict``)."""

    def __init__(
        self,
        level: int = 3,
        n_particles: int = 1,
        length: float = 1.0,
        points: int = 128,
        strength: float = 1.0,
        softening: float = 0.5,
    ):
        self.level = level
        self.n_particles = n_particles
        self.length = length
        self.points = points
        self.strength = strength
        self.softening = softening

    def fit(self, X=None, y=None):
        self.model_ = self._model()
        self.model_.hierarchy.check_level(self.level)
        self.n_features_in_ = self.model_.hierarchy.n_cells(self.level)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} cell potentials, got {X.shape[1]}")
        hier = self.model_.hierarchy
        return np.array([forward_density(self.model_, Potential(hier, self.level, row)).values for row in X])
