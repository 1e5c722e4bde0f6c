"""Experiments across the scale hierarchy.

Every "fine-grained" quantity here means the grid-level (deepest) value:
``F[rho]`` is the inversion of the density at one point per cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .duality import NotInteriorDensity, lieb_maximize
from .engine import ModelSpec, solve, site_occupation
from .model import (
    CoarseDensity,
    FineDensity,
    Potential,
    embed,
    norm_lp,
    project,
)

__all__ = [
    "ScaleSweepRow",
    "ProbeVerdict",
    "fit_power_law",
    "scale_sweep",
    "perturbed_scale_sweep",
    "representability_probe",
    "quasi_continuity_probe",
    "continuity_modulus",
    "plateau_bump",
    "oscillating_potential",
    "oscillation_blowup",
    "random_neighbor",
]


@dataclass(frozen=True)
class ScaleSweepRow:
    n: int
    D_n: float
    F_n: float
    dist_p: dict
    lambda_dist_p: dict
    v_sup: float
    converged: bool
    residual: float
    potential: Potential | None = field(default=None, repr=False, compare=False)
    lambda_density: FineDensity | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class ProbeVerdict:
    kind: str  # representable | blowup | inconclusive
    evidence: dict
    fitted_rates: dict


def fit_power_law(x, y) -> tuple[float, float]:
    """Least-squares exponent of ``y ~ x**k`` on log-log axes, and its r^2."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / total if total > 0 else 1.0
    return float(slope), float(r2)


def _sweep_levels(model: ModelSpec, levels) -> list[int]:
    hier = model.hierarchy
    out = sorted({hier.check_level(n) for n in levels})
    if hier.depth not in out:
        out.append(hier.depth)
    return out


def scale_sweep(
    model: ModelSpec,
    rho: FineDensity,
    levels=(1, 2, 3, 4, 5),
    tol: float = 1e-10,
    densities: dict | None = None,
) -> list[ScaleSweepRow]:
    """Invert ``pi_n rho`` level by level, warm-starting each from the coarser one.

    The grid level is always appended; it plays the role of ``F[rho]``.
    ``densities`` may override the coarse density used at a level.
    """
    if np.any(rho.values <= 0):
        raise NotInteriorDensity("scale sweep needs a strictly positive fine density")
    hier = model.hierarchy
    rows = []
    warm = None
    for n in _sweep_levels(model, levels):
        coarse = (densities or {}).get(n) or project(rho, n, hier)
        step = embed(coarse)
        res = lieb_maximize(model, coarse, tol=tol, v_init=warm)
        warm = res.potential
        dist = {p: norm_lp(rho - step, p) for p in (1, 2)}
        lam_dist = {p: norm_lp(res.lambda_density - rho, p) for p in (1, 2)}
        rows.append(
            ScaleSweepRow(
                n=n,
                D_n=hier.cell_width(n),
                F_n=res.F_value,
                dist_p=dist,
                lambda_dist_p=lam_dist,
                v_sup=res.potential.sup_norm(),
                converged=res.converged,
                residual=res.residual,
                potential=res.potential,
                lambda_density=res.lambda_density,
            )
        )
    return rows


def perturbed_scale_sweep(
    model: ModelSpec,
    rho: FineDensity,
    levels=(1, 2, 3, 4, 5),
    amplitude: float = 0.5,
    rng: np.random.Generator | None = None,
    tol: float = 1e-10,
    modes: int = 4,
) -> list[ScaleSweepRow]:
    """Sweep over ``pi_n rho_n`` with ``rho_n = rho (1 + amplitude D_n g)``, renormalized.

    ``g`` is one random smooth profile with ``sup |g| = 1``.  The level-``n``
    density sits at L1 distance ``O(D_n)`` from ``pi_n rho`` and stays
    interior, and ``F^n[pi_n rho_n] <= F[rho_n] -> F[rho]`` holds by
    construction, so the sweep must still converge to ``F[rho]``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    hier = model.hierarchy
    x = rho.grid.x / rho.grid.length
    coeffs = rng.normal(size=modes) / np.arange(1, modes + 1)
    g = sum(c * np.cos((k + 1) * np.pi * x) for k, c in enumerate(coeffs))
    g /= np.abs(g).max()
    overrides = {}
    for n in _sweep_levels(model, levels):
        if n == hier.depth:
            continue
        factor = 1.0 + min(amplitude * hier.cell_width(n) / rho.grid.length, 0.5) * g
        moved = FineDensity(rho.grid, rho.values * factor).normalized(rho.particle_count)
        overrides[n] = project(moved, n, hier)
    return scale_sweep(model, rho, levels, tol=tol, densities=overrides)


def representability_probe(
    model: ModelSpec,
    rho: FineDensity,
    levels=(1, 2, 3, 4, 5),
    v_cap: float = 1e4,
    stabilization: float = 0.05,
    growth: float = 2.0,
    window: tuple[float, float] = (0.25, 0.75),
    reference: Potential | None = None,
    tol: float = 1e-10,
) -> ProbeVerdict:
    """Classify whether the representing potentials of ``pi_n rho`` stay bounded.

    Only the requested levels enter the verdict (the grid row is evidence).
    ``representable`` if ``v_sup`` of the last two levels agree within
    ``stabilization`` and stay below ``v_cap``; ``blowup`` if ``v_sup`` rises
    monotonically by at least ``growth`` over the last three levels.
    """
    rows = scale_sweep(model, rho, levels, tol=tol)
    requested = sorted(set(levels))
    probe_rows = [r for r in rows if r.n in requested]
    v_sup = np.array([r.v_sup for r in probe_rows])
    evidence = {
        "levels": [r.n for r in probe_rows],
        "v_sup": v_sup.tolist(),
        "F_n": [r.F_n for r in probe_rows],
        "converged": [r.converged for r in probe_rows],
        "grid_v_sup": rows[-1].v_sup,
    }
    if reference is not None:
        evidence["window_error"] = [
            _window_gap(r.potential, reference, window) for r in probe_rows
        ]
    fitted = {}
    if len(probe_rows) >= 2:
        fitted["v_sup_vs_D"] = fit_power_law([r.D_n for r in probe_rows], np.maximum(v_sup, 1e-300))
        d1 = [r.dist_p[1] for r in probe_rows]
        if min(d1) > 0:
            fitted["dist_1_vs_D"] = fit_power_law([r.D_n for r in probe_rows], d1)
    kind = "inconclusive"
    if all(evidence["converged"]) and len(v_sup) >= 2:
        last, prev = v_sup[-1], v_sup[-2]
        if abs(last - prev) <= stabilization * max(abs(last), abs(prev)) and last <= v_cap:
            kind = "representable"
    if kind == "inconclusive" and len(v_sup) >= 3:
        tail = v_sup[-3:]
        if np.all(np.diff(tail) > 0) and tail[-1] >= growth * tail[0]:
            kind = "blowup"
    return ProbeVerdict(kind, evidence, fitted)


def _window_gap(v: Potential, reference: Potential, window) -> float:
    """Sup distance modulo constants over cells whose centres lie in ``window``."""
    hier = v.hierarchy
    ref = _average_to(reference, v.level)
    centers = hier.cell_centers(v.level) / hier.grid.length
    mask = (centers >= window[0]) & (centers <= window[1])
    diff = v.values[mask] - ref[mask]
    return float((diff.max() - diff.min()) / 2) if diff.size else 0.0


def _average_to(v: Potential, level: int) -> np.ndarray:
    if v.level >= level:
        return v.values.reshape(2**level, -1).mean(axis=1)
    return v.refine(level).values


def random_neighbor(
    rho: CoarseDensity,
    radius: float,
    rng: np.random.Generator,
    mode: str = "both",
    max_fraction: float = 0.9,
    attempts: int = 200,
) -> CoarseDensity | None:
    """Random density at L1 distance ``radius`` from ``rho``.

    ``mode="both"`` keeps the particle number (sum-zero perturbation);
    ``mode="lower"`` removes mass, giving ``rho' <= rho``.  No cell loses more
    than ``max_fraction`` of its content.
    """
    widths = rho.widths
    for _ in range(attempts):
        if mode == "lower":
            d = -rng.uniform(0, 1, rho.averages.size) * rho.averages
        else:
            d = rng.standard_normal(rho.averages.size)
            d -= (d @ widths) / widths.sum()
        norm = np.abs(d) @ widths
        if norm == 0:
            continue
        d *= radius / norm
        if np.all(rho.averages + d > (1 - max_fraction) * rho.averages):
            return CoarseDensity(rho.hierarchy, rho.level, rho.averages + d)
    return None


def _product(v: Potential, rho: CoarseDensity) -> np.ndarray:
    return v.values * rho.averages


def quasi_continuity_probe(
    model: ModelSpec,
    rho: CoarseDensity,
    radii,
    samples: int = 20,
    rng: np.random.Generator | None = None,
    window: tuple[float, float] = (0.25, 0.75),
    tol: float = 1e-10,
) -> list[dict]:
    """Max ``||v[rho'] rho' - v[rho] rho||_1`` over random ``rho'`` on L1 spheres."""
    rng = rng if rng is not None else np.random.default_rng(0)
    base = lieb_maximize(model, rho, tol=tol)
    base_prod = _product(base.potential, rho)
    widths = rho.widths
    table = []
    for r in radii:
        worst_prod, worst_window, failures, drawn = 0.0, 0.0, 0, 0
        for _ in range(samples):
            other = random_neighbor(rho, r, rng)
            if other is None:
                failures += 1
                continue
            drawn += 1
            res = lieb_maximize(model, other, tol=tol, v_init=base.potential)
            if not res.converged:
                failures += 1
                continue
            diff = np.abs(_product(res.potential, other) - base_prod) @ widths
            worst_prod = max(worst_prod, float(diff))
            worst_window = max(worst_window, _window_gap(res.potential, base.potential, window))
        table.append(
            {
                "radius": float(r),
                "max_product_distance": worst_prod,
                "max_window_potential_distance": worst_window,
                "samples": drawn,
                "failures": failures,
            }
        )
    return table


def _hat_F(model: ModelSpec, rho: CoarseDensity, tol, warm) -> float:
    # homogeneous extension: F^[c rho] = c F[rho] for normalized rho
    scale = rho.particle_count / model.n_particles
    res = lieb_maximize(model, rho * (1.0 / scale), tol=tol, v_init=warm)
    return scale * res.F_value


def continuity_modulus(
    model: ModelSpec,
    rho: CoarseDensity,
    radii,
    samples: int = 20,
    mode: str = "both",
    rng: np.random.Generator | None = None,
    tol: float = 1e-12,
) -> list[dict]:
    """Max ``|F[rho'] - F[rho]|`` over random ``rho'`` at each L1 radius.

    ``mode="lower"`` samples ``rho' <= rho`` and evaluates the homogeneous
    extension of ``F`` to un-normalized densities.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    base = lieb_maximize(model, rho, tol=tol)
    table = []
    for r in radii:
        if r == 0:
            table.append({"radius": 0.0, "modulus": 0.0, "samples": 1})
            continue
        worst, drawn = 0.0, 0
        for _ in range(samples):
            other = random_neighbor(rho, r, rng, mode=mode)
            if other is None:
                continue
            drawn += 1
            value = _hat_F(model, other, tol, base.potential)
            worst = max(worst, abs(value - base.F_value))
        table.append({"radius": float(r), "modulus": worst, "samples": drawn})
    return table


def plateau_bump(grid, start: float, stop: float, edge_width: float = 0.0) -> np.ndarray:
    """Cutoff ``0 <= eta <= 1`` equal to one on ``[start, stop]``.

    ``edge_width = 0`` gives sharp edges; positive values give smooth
    ``sin^2`` shoulders of that width outside the plateau.
    """
    x = grid.x
    eta = ((x >= start) & (x <= stop)).astype(float)
    if edge_width > 0:
        left = (x < start) & (x > start - edge_width)
        right = (x > stop) & (x < stop + edge_width)
        eta[left] = np.sin(0.5 * np.pi * (x[left] - start + edge_width) / edge_width) ** 2
        eta[right] = np.sin(0.5 * np.pi * (stop + edge_width - x[right]) / edge_width) ** 2
    return eta


def oscillating_potential(grid, ell: float, eta: np.ndarray, phase_origin: float) -> np.ndarray:
    """``eta(x) sin((x - phase_origin) / ell)`` on the grid."""
    return eta * np.sin((grid.x - phase_origin) / ell)


def oscillation_blowup(
    model: ModelSpec,
    rho0: CoarseDensity,
    amplitude: float,
    ells,
    support: tuple[float, float] = (0.3, 0.95),
    edge_width: float = 0.0,
    reference: FineDensity | None = None,
    tol: float = 1e-10,
) -> dict:
    """Response of the ground state to ``v[rho0] + amplitude * w_ell`` for shrinking ``ell``.

    ``w_ell`` oscillates with phase anchored at the left edge of its support.
    Returns the table plus fitted exponents of the pairings against ``ell``.
    """
    grid = model.grid
    h = grid.spacing
    ells = np.asarray(ells, dtype=float)
    if np.any(ells < 4 * h):
        raise ValueError(f"ell below grid resolution (needs ell >= 4h = {4 * h:.4g})")
    a, b = support[0] * grid.length, support[1] * grid.length
    origin = grid.x[np.argmin(np.abs(grid.x - a))]
    eta = plateau_bump(grid, origin, b, edge_width)
    base = lieb_maximize(model, rho0, tol=tol)
    lam = base.lambda_density
    v_fine = base.potential.on_grid()
    cells = rho0.hierarchy.cell_of_point(rho0.level)
    rows = []
    for ell in ells:
        w = oscillating_potential(grid, ell, eta, origin)
        sol = solve(model, v_fine + amplitude * w)
        pops = np.bincount(cells, site_occupation(model, sol.space.basis[:, 0]), rho0.averages.size)
        drift = float(np.abs(pops - rho0.populations).sum())
        row = {
            "ell": float(ell),
            "pairing_lambda": float(h * w @ lam.values),
            "perturbed_energy": float(sol.space.energy),
            "drift": drift,
            "potential_sup": float(amplitude * np.abs(w).max()),
        }
        if reference is not None:
            row["pairing_reference"] = float(h * w @ reference.values)
        rows.append(row)
    fits = {"pairing_lambda": fit_power_law(ells, [abs(r["pairing_lambda"]) for r in rows])}
    if reference is not None:
        fits["pairing_reference"] = fit_power_law(ells, [abs(r["pairing_reference"]) for r in rows])
    return {"rows": rows, "fits": fits, "phase_origin": float(origin), "support_end": float(b)}
