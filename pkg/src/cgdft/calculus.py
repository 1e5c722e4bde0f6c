"""Directional derivatives of the intrinsic energy and related diagnostics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .duality import (
    InversionResult,
    energetic_excess,
    lieb_maximize,
)
from .engine import ModelSpec, solve, site_occupation
from .model import CoarseDensity, Potential, inner

__all__ = [
    "QuotientTrace",
    "SliceReport",
    "EkelandResult",
    "extended_add",
    "directional_derivative",
    "slice_scan",
    "epsilon_subdifferential_check",
    "ekeland_repair",
    "default_schedule",
]


def extended_add(a: float, b: float) -> float:
    """Extended-real sum; ``inf + (-inf)`` is meaningless and raises."""
    if (a == np.inf and b == -np.inf) or (a == -np.inf and b == np.inf):
        raise ArithmeticError("undefined extended-real sum inf + (-inf)")
    return a + b


def default_schedule() -> np.ndarray:
    return 2.0 ** -np.arange(3, 13)


@dataclass(frozen=True, eq=False)
class QuotientTrace:
    s_values: np.ndarray
    quotients: np.ndarray
    limit_estimate: float
    monotone_violation: float
    direction: CoarseDensity
    leaves_domain: bool  # some s in the schedule exits the non-negative cone

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s", "quotient"])
        for s, q in zip(self.s_values, self.quotients):
            writer.writerow([f"{s:.17g}", f"{q:.17g}"])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class SliceReport:
    s_grid: np.ndarray
    F_values: np.ndarray  # +inf outside the domain; nan on the domain boundary
    classification: str
    convexity_violation: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s", "F"])
        for s, f in zip(self.s_grid, self.F_values):
            writer.writerow([f"{s:.17g}", f"{f:.17g}"])
        return buf.getvalue()


def _unit_direction(drho: CoarseDensity) -> CoarseDensity:
    total = drho.particle_count
    norm = drho.l1_norm()
    if abs(total) > 1e-10 * max(1.0, norm):
        raise ValueError(f"direction must carry zero net particle number, got {total:.3e}")
    if norm == 0:
        return drho
    return drho * (1.0 / norm)


def directional_derivative(
    model: ModelSpec,
    rho: CoarseDensity,
    drho: CoarseDensity,
    schedule=None,
    base: InversionResult | None = None,
    tol: float = 1e-10,
) -> QuotientTrace:
    """Difference quotients ``(F[rho + s drho] - F[rho]) / s`` along a schedule.

    ``drho`` is rescaled to unit L1 norm.  Points outside the non-negative
    cone get ``+inf``; the limit is the smallest-``s`` quotient refined by one
    Richardson step.
    """
    direction = _unit_direction(drho)
    s_values = np.sort(np.asarray(default_schedule() if schedule is None else schedule, float))[::-1]
    if np.any(s_values <= 0):
        raise ValueError("schedule must be positive")
    if base is None:
        base = lieb_maximize(model, rho, tol=tol)
    if direction.l1_norm() == 0:
        zeros = np.zeros_like(s_values)
        return QuotientTrace(s_values, zeros, 0.0, 0.0, direction, False)

    quotients = np.empty_like(s_values)
    warm = base.potential
    leaves = False
    for i, s in enumerate(s_values):
        moved = rho + direction * s
        if np.any(moved.averages < 0) or not moved.is_interior():
            quotients[i] = np.inf
            leaves = True
            continue
        res = lieb_maximize(model, moved, tol=tol, v_init=warm)
        warm = res.potential
        quotients[i] = (res.F_value - base.F_value) / s
    finite = np.isfinite(quotients)
    if finite.sum() >= 2:
        diffs = np.diff(quotients[finite])  # should be <= 0 as s decreases
        violation = float(max(0.0, diffs.max()))
    else:
        violation = 0.0
    limit = _richardson(s_values[finite], quotients[finite])
    return QuotientTrace(s_values, quotients, limit, violation, direction, leaves)


def _richardson(s: np.ndarray, q: np.ndarray) -> float:
    if q.size == 0:
        return np.inf
    if q.size == 1:
        return float(q[-1])
    ratio = s[-2] / s[-1]
    return float((ratio * q[-1] - q[-2]) / (ratio - 1))


def slice_scan(
    model: ModelSpec,
    rho: CoarseDensity,
    drho: CoarseDensity,
    s_grid,
    tol: float = 1e-10,
) -> SliceReport:
    """``F`` along the line ``rho + s drho`` with extended-real values.

    Classification: ``a`` finite on both sides of ``s = 0``, ``b`` on one
    side only, ``c`` only at ``s = 0``.
    """
    if abs(drho.particle_count) > 1e-10 * max(1.0, drho.l1_norm()):
        raise ValueError("slice direction must carry zero net particle number")
    s_grid = np.sort(np.asarray(s_grid, dtype=float))
    values = np.empty_like(s_grid)
    in_domain = np.empty(s_grid.size, dtype=bool)
    for i, s in enumerate(s_grid):
        moved = rho + drho * s
        in_domain[i] = moved.in_plus()
        if not in_domain[i]:
            values[i] = np.inf
        elif moved.is_interior():
            values[i] = lieb_maximize(model, moved, tol=tol).F_value
        else:
            values[i] = np.nan  # finite, on the boundary of the cone
    pos = bool(np.any(in_domain & (s_grid > 0)))
    neg = bool(np.any(in_domain & (s_grid < 0)))
    classification = "a" if pos and neg else ("b" if pos or neg else "c")

    # second divided differences on consecutive finite values
    ok = np.isfinite(values)
    violation = 0.0
    xs, ys = s_grid[ok], values[ok]
    for i in range(1, xs.size - 1):
        left = (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1])
        right = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
        violation = max(violation, left - right)
    return SliceReport(s_grid, values, classification, float(violation))


def epsilon_subdifferential_check(
    model: ModelSpec, rho: CoarseDensity, v: Potential, eps: float, F_value: float | None = None
) -> bool:
    """Whether ``rho`` comes within ``eps`` of the ground energy of ``v``."""
    return energetic_excess(model, rho, v, F_value=F_value, tol=1e-10).delta <= eps


@dataclass(frozen=True, eq=False)
class EkelandResult:
    found: bool
    density: CoarseDensity | None
    potential: Potential | None
    density_distance: float
    potential_distance: float
    excess: float
    energy_decrease: float  # (F + <v,.>) at the original pair minus at the new one
    message: str = ""
    details: dict = field(default_factory=dict)


def ekeland_repair(
    model: ModelSpec,
    rho: CoarseDensity,
    v: Potential,
    eps: float,
    lam: float,
    max_iter: int = 200,
) -> EkelandResult:
    """Search for an exact density/potential pair near an ``eps``-optimal one.

    Minimizes ``F[rho'] + <v, rho'> + (eps/lam) ||rho' - rho||_1`` through its
    dual: maximize ``E[v + s] - <s, rho>`` over ``||s||_inf <= eps/lam``.  The
    maximizer gives the repaired potential ``v + s`` and its ground density is
    the repaired density.  Success is certified, never assumed.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if v.level > rho.level:
        raise ValueError("potential is finer than the density")
    v = v.refine(rho.level)
    base = lieb_maximize(model, rho, tol=1e-10)
    start = energetic_excess(model, rho, v, F_value=base.F_value)
    if start.delta > eps + 1e-10:
        raise ValueError(f"precondition violated: excess {start.delta:.3e} exceeds eps {eps:.3e}")
    radius = eps / lam
    hier, level = rho.hierarchy, rho.level
    cells = hier.cell_of_point(level)
    target = rho.populations

    def objective(s):
        sol = solve(model, (v.values + s)[cells])
        pops = np.bincount(cells, site_occupation(model, sol.space.basis[:, 0]), s.size)
        return -(sol.space.energy - s @ target), -(pops - target)

    s0 = np.zeros(v.values.size)
    if radius > 0:
        opt = minimize(
            objective,
            s0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(-radius, radius)] * s0.size,
            options={"maxiter": max_iter, "ftol": 1e-15, "gtol": 1e-12},
        )
        s = np.clip(opt.x, -radius, radius)
        details = {"optimizer_iterations": int(opt.nit), "optimizer_message": str(opt.message)}
    else:
        s, details = s0, {"optimizer_iterations": 0}
    new_v = v + Potential(hier, level, s)
    sol = solve(model, new_v.on_grid())
    pops = np.bincount(cells, site_occupation(model, sol.space.basis[:, 0]), s.size)
    new_rho = CoarseDensity(hier, level, pops / rho.widths)
    if not new_rho.is_interior():
        return EkelandResult(False, None, None, np.inf, np.inf, np.inf, np.nan, "repaired density left the interior", details)

    check = lieb_maximize(model, new_rho, tol=1e-10, v_init=new_v)
    excess = energetic_excess(model, new_rho, new_v, F_value=check.F_value).delta
    rho_dist = (new_rho - rho).l1_norm()
    diff = new_v.values - v.values
    # potentials matter modulo constants on fixed-N densities
    v_dist = float((diff.max() - diff.min()) / 2)
    decrease = (base.F_value + inner(v, rho)) - (check.F_value + inner(v, new_rho))
    slack = 1e-8
    found = rho_dist <= lam + slack and v_dist <= radius + slack and abs(excess) <= slack and decrease >= -slack
    message = "certified" if found else "no certified pair within the bounds"
    details["ekeland_potential"] = check.potential
    return EkelandResult(bool(found), new_rho, new_v, float(rho_dist), v_dist, float(excess), float(decrease), message, details)
