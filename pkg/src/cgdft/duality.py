"""Legendre-Fenchel pair between intrinsic energy and ground-state energy.

The intrinsic energy of a coarse density is computed as the maximum of the
concave map ``G(v) = E[v] - <v, rho>`` over level-``n`` cell potentials.  Its
gradient is the mismatch of cell populations, and its Hessian is the static
density response, so a damped Newton ascent converges quadratically.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from . import engine
from .engine import EnsembleState, ModelSpec, density_of, intrinsic_energy_of
from .model import CoarseDensity, FineDensity, Potential, inner, project

__all__ = [
    "NotInteriorDensity",
    "NonConvergence",
    "InversionResult",
    "ExcessReport",
    "ground_energy",
    "lieb_maximize",
    "intrinsic_energy",
    "energetic_excess",
    "subgradient_check",
    "SubgradientVerdict",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 2000


class NotInteriorDensity(ValueError):
    """Raised when a cell average is not strictly positive."""


class NonConvergence(RuntimeError):
    def __init__(self, result: "InversionResult"):
        super().__init__(
            f"inversion stopped after {result.iterations} iterations, residual {result.residual:.3e}"
        )
        self.result = result


@dataclass(frozen=True, eq=False)
class InversionResult:
    level: int
    F_value: float
    potential: Potential
    lambda_density: FineDensity
    mixing_weights: np.ndarray
    residual: float
    iterations: int
    converged: bool
    ground_energy: float  # E of the gauge-fixed potential, zero up to round-off
    primal_value: float  # <T + V_ee> of the retrieved ensemble
    trace: list = field(default_factory=list)
    model: ModelSpec | None = None
    density: CoarseDensity | None = None

    @property
    def lambda_coarse(self) -> CoarseDensity:
        return project(self.lambda_density, self.level, self.potential.hierarchy)

    def to_dict(self) -> dict:
        grid = self.potential.hierarchy.grid
        out = {
            "level": self.level,
            "F_value": self.F_value,
            "potential": self.potential.values.tolist(),
            "gauge_offset": self.potential.gauge_offset,
            "lambda_density": self.lambda_density.values.tolist(),
            "mixing_weights": np.asarray(self.mixing_weights).tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "ground_energy": self.ground_energy,
            "primal_value": self.primal_value,
            "residual_trace": list(self.trace),
            "config": {"L": grid.length, "M": grid.points},
        }
        if self.model is not None:
            out["config"].update(
                N=self.model.n_particles,
                strength=self.model.strength,
                softening=self.model.softening,
            )
        if self.density is not None:
            out["density"] = self.density.averages.tolist()
        return out


@dataclass(frozen=True)
class ExcessReport:
    delta: float
    F_part: float
    pairing_part: float
    E_part: float


def ground_energy(model: ModelSpec, v: Potential) -> float:
    """Ground-state energy of ``T + V_ee + v``."""
    return engine.ground_space(model, v).energy


class _Dual:
    """Evaluates ``G`` and its derivatives at level-``n`` potentials."""

    def __init__(self, model, rho: CoarseDensity, degeneracy_tolerance):
        self.model = model
        self.rho = rho
        self.hierarchy = rho.hierarchy
        self.cells = self.hierarchy.cell_of_point(rho.level)
        self.n_cells = rho.averages.size
        self.target = rho.populations
        self.tol = degeneracy_tolerance
        self._last = None  # (fine_v, energy) for the shift bound

    def evaluate(self, v: np.ndarray):
        fine_v = v[self.cells]
        shift = None
        if self._last is not None:
            prev_v, prev_e = self._last
            # Weyl bound: E0 moves by at most N * max|dv|
            shift = prev_e - self.model.n_particles * float(np.max(np.abs(fine_v - prev_v)))
        sol = engine.solve(self.model, fine_v, self.tol, shift=shift)
        self._last = (fine_v, sol.space.energy)
        basis = sol.space.basis
        site_pops = np.stack([engine.site_occupation(self.model, basis[:, j]) for j in range(basis.shape[1])], 1)
        cell_pops = np.zeros((self.n_cells, basis.shape[1]))
        np.add.at(cell_pops, self.cells, site_pops)
        if basis.shape[1] == 1:
            weights = np.ones(1)
        else:
            weights = _mixing_weights(cell_pops, self.target)
        pops = cell_pops @ weights
        value = sol.space.energy - float(v @ self.target)
        return _Point(v, sol, weights, pops, pops - self.target, value)


@dataclass(eq=False)
class _Point:
    v: np.ndarray
    sol: engine.Solution
    weights: np.ndarray
    pops: np.ndarray
    grad: np.ndarray
    value: float

    @property
    def residual(self) -> float:
        return float(np.abs(self.grad).sum())


def _mixing_weights(cell_pops: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Non-negative weights summing to one that best reproduce ``target``."""
    k = cell_pops.shape[1]
    penalty = 1e3 * max(1.0, float(np.abs(target).max()))
    a = np.vstack([cell_pops, penalty * np.ones((1, k))])
    b = np.append(target, penalty)
    w, _ = nnls(a, b)
    return w / w.sum()


def _newton_direction(point: _Point, dual: _Dual) -> np.ndarray:
    chi = engine.cell_response(point.sol, dual.cells, dual.n_cells)
    ones = np.ones(dual.n_cells)
    scale = max(float(np.abs(np.diag(chi)).max()), 1e-300)
    # -chi is PSD with the constants as kernel; pin the kernel with a rank-one term
    system = -chi + scale * np.outer(ones, ones) / dual.n_cells
    try:
        step = np.linalg.solve(system, point.grad)
    except np.linalg.LinAlgError:
        step = np.linalg.lstsq(system, point.grad, rcond=None)[0]
    return step - step.mean()


def lieb_maximize(
    model: ModelSpec,
    rho: CoarseDensity,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    v_init: Potential | None = None,
    degeneracy_tolerance: float | None = None,
    cancel: threading.Event | None = None,
    strict: bool = False,
) -> InversionResult:
    """Intrinsic energy ``F^n[rho]`` and representing potential ``v[rho]``.

    Maximizes ``E[v] - <v, rho>`` over level-``rho.level`` potentials, starting
    from ``v_init`` (zero by default).  The returned potential is gauge-fixed so
    that its ground energy vanishes.

    Raises
    ------
    NotInteriorDensity
        If some cell average is not strictly positive.
    NonConvergence
        Only when ``strict``; otherwise the result carries ``converged=False``.
    """
    if rho.hierarchy.grid != model.grid:
        raise ValueError("density grid does not match model grid")
    if not rho.is_interior():
        raise NotInteriorDensity(
            f"cell averages must be strictly positive, minimum is {rho.averages.min():.3e}"
        )
    count = rho.particle_count
    if abs(count - model.n_particles) > 1e-8 * max(1, model.n_particles):
        raise ValueError(f"density integrates to {count}, model has N={model.n_particles}")

    dual = _Dual(model, rho, degeneracy_tolerance)
    if v_init is None:
        v = np.zeros(dual.n_cells)
    else:
        if v_init.level > rho.level:
            raise ValueError("initial potential is finer than the density")
        v = v_init.refine(rho.level).values.copy()
        v -= v.mean()
    point = dual.evaluate(v)
    trace = [point.residual]
    iterations = 0
    step_size = 1.0  # for plain supergradient steps at degenerate points
    stall_window = 50
    while point.residual > tol and iterations < max_iter:
        if cancel is not None and cancel.is_set():
            break
        iterations += 1
        if point.sol.space.degeneracy == 1:
            direction = _newton_direction(point, dual)
        else:
            direction = step_size * point.grad
        slope = float(point.grad @ direction)
        t = 1.0
        # eigenvalue round-off scales with the Hamiltonian norm, not with |G|
        h = model.grid.spacing
        noise = 10 * np.finfo(float).eps * model.n_particles * (2.0 / h**2 + float(np.abs(point.v).max()))
        while True:
            trial = dual.evaluate(point.v + t * direction)
            if trial.value >= point.value + 1e-4 * t * slope - noise:
                break
            if trial.residual < point.residual and trial.value >= point.value - noise:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            log.debug("line search failed at iteration %d", iterations)
            break
        if point.sol.space.degeneracy > 1:
            step_size = step_size * (2.0 if t == 1.0 else t)
        point = trial
        trace.append(point.residual)
        if len(trace) > stall_window and min(trace[-stall_window:]) >= trace[-stall_window - 1]:
            log.debug("no residual progress over %d iterations", stall_window)
            break

    result = _finish(model, rho, dual, point, iterations, trace, tol)
    if strict and not result.converged:
        raise NonConvergence(result)
    return result


def _finish(model, rho, dual, point: _Point, iterations, trace, tol) -> InversionResult:
    space = point.sol.space
    n = model.n_particles
    shift = -space.energy / n
    potential = Potential(rho.hierarchy, rho.level, point.v, 0.0).shifted(shift)
    state = EnsembleState(model, point.weights, space.basis)
    lam = density_of(state)
    F_value = point.value
    primal = intrinsic_energy_of(state)
    return InversionResult(
        level=rho.level,
        F_value=float(F_value),
        potential=potential,
        lambda_density=lam,
        mixing_weights=point.weights,
        residual=point.residual,
        iterations=iterations,
        converged=point.residual <= tol,
        ground_energy=float(space.energy + n * shift),
        primal_value=primal,
        trace=trace,
        model=model,
        density=rho,
    )


def intrinsic_energy(model: ModelSpec, rho: CoarseDensity, **kwargs) -> float:
    """``F^n[rho]`` with extended-real conventions: ``+inf`` outside the domain."""
    if not rho.in_plus() or abs(rho.particle_count - model.n_particles) > 1e-8:
        return np.inf
    return lieb_maximize(model, rho, **kwargs).F_value


def energetic_excess(
    model: ModelSpec, rho: CoarseDensity, v: Potential, F_value: float | None = None, **kwargs
) -> ExcessReport:
    """``F[rho] + <v, rho> - E[v]``; zero exactly on representing pairs."""
    if F_value is None:
        F_value = lieb_maximize(model, rho, **kwargs).F_value
    pairing = inner(v, rho)
    e = ground_energy(model, v)
    return ExcessReport(F_value + pairing - e, F_value, pairing, e)


@dataclass(frozen=True)
class SubgradientVerdict:
    holds: bool
    worst_gap: float
    witness: CoarseDensity | None
    samples: int

    def __bool__(self) -> bool:
        return self.holds


def subgradient_check(
    model: ModelSpec,
    rho: CoarseDensity,
    v: Potential,
    sample_count: int = 100,
    rng: np.random.Generator | None = None,
    F_rho: float | None = None,
    slack: float = 1e-8,
    radius: float = 0.1,
    tol: float = 1e-10,
) -> SubgradientVerdict:
    """Test ``F[rho'] >= F[rho] - <v, rho' - rho>`` on random interior ``rho'``.

    Random samples are followed by a targeted search along single-cell mass
    transfers, which finds violations left by a mis-set cell value.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    hier, n = rho.hierarchy, rho.level
    if F_rho is None:
        F_rho = lieb_maximize(model, rho, tol=tol).F_value
    worst, witness = np.inf, None
    base_pairing = inner(v, rho)

    def gap(other: CoarseDensity, warm: Potential | None) -> float:
        F_other = lieb_maximize(model, other, tol=tol, v_init=warm).F_value
        return F_other - F_rho + (inner(v, other) - base_pairing)

    if rho.averages.size == 1:
        return SubgradientVerdict(True, 0.0, None, 0)

    warm = v
    tried = 0
    for _ in range(sample_count):
        other = _random_neighbor(rho, rng.uniform(0, radius) * rho.particle_count, rng)
        if other is None:
            continue
        tried += 1
        g = gap(other, warm)
        if g < worst:
            worst, witness = g, other
    # directed search: move a little mass into or out of each cell
    widths = rho.widths
    for cell in range(rho.averages.size):
        for sign in (1.0, -1.0):
            direction = -np.full(rho.averages.size, 1.0 / rho.averages.size / widths)
            direction[cell] += 1.0 / widths[cell]
            for t in (1e-2, 1e-3, 1e-4):
                step = sign * t * rho.particle_count
                other_avg = rho.averages + step * direction
                if np.any(other_avg <= 0):
                    continue
                other = CoarseDensity(hier, n, other_avg)
                tried += 1
                g = gap(other, warm)
                if g < worst:
                    worst, witness = g, other
    holds = worst >= -slack
    return SubgradientVerdict(bool(holds), float(worst), None if holds else witness, tried)


def _random_neighbor(rho: CoarseDensity, radius: float, rng, attempts: int = 50):
    """Interior density at L1 distance ``radius`` from ``rho`` with the same mass."""
    widths = rho.widths
    for _ in range(attempts):
        d = rng.standard_normal(rho.averages.size)
        d -= (d @ widths) / widths.sum()
        d /= np.abs(d) @ widths
        avg = rho.averages + radius * d
        if np.all(avg > 0):
            return CoarseDensity(rho.hierarchy, rho.level, avg)
    return None
