"""Experiments behind the command-line subcommands.

Each runner takes a validated :class:`RunConfig` and returns an
:class:`Outcome`: CSV tables, JSON documents, named checks and verdicts.
Writing files is left to the CLI.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import checks
from .config import ConfigError, RunConfig
from .duality import ground_energy, lieb_maximize
from .engine import ModelSpec, f_max
from .io import density_to_csv, potential_to_csv, read_density_csv
from .model import CoarseDensity, FineDensity, Grid, Potential, embed, project
from .multiscale import (
    continuity_modulus,
    fit_power_law,
    perturbed_scale_sweep,
    quasi_continuity_probe,
    representability_probe,
    scale_sweep,
)
from .sampling import (
    flat_top_density,
    forward_density,
    harmonic_density,
    node_density,
    random_smooth_density,
    random_smooth_potential,
    weak_density,
)

__all__ = ["Outcome", "EXPERIMENTS", "build_model", "build_density", "run_experiment", "thread_cap"]


@dataclass
class Outcome:
    tables: dict = field(default_factory=dict)  # name -> list of row dicts
    texts: dict = field(default_factory=dict)  # file name -> CSV text
    documents: dict = field(default_factory=dict)  # name -> JSON payload
    checks: list = field(default_factory=list)  # CheckResult
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def thread_cap() -> int:
    raw = os.environ.get("CGDFT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"CGDFT_THREADS must be a positive integer, got {raw!r}") from None


def build_model(cfg: RunConfig, n_particles: int | None = None) -> ModelSpec:
    m = cfg.model
    return ModelSpec(Grid(m.L, m.M), n_particles or m.N, m.strength, m.softening)


def build_density(cfg: RunConfig, model: ModelSpec, rng: np.random.Generator) -> FineDensity | CoarseDensity:
    d = cfg.density
    grid, N, hier = model.grid, model.n_particles, model.hierarchy
    if d.kind == "smooth":
        return random_smooth_density(grid, N, rng, modes=d.modes, amplitude=d.amplitude)
    if d.kind == "box":
        return forward_density(model, Potential.zeros(hier, 0))
    if d.kind == "node":
        return node_density(grid, N, d.node)
    if d.kind == "flat_top":
        return flat_top_density(grid, N, d.ramp)
    if d.kind == "harmonic":
        return harmonic_density(model, d.omega)
    if d.kind == "forward":
        level = hier.depth if d.potential_level is None else d.potential_level
        if level not in hier.levels:
            raise ConfigError(f"density.potential_level {level} outside 0..{hier.depth}")
        return forward_density(model, random_smooth_potential(hier, level, rng, amplitude=d.amplitude, modes=d.modes))
    if d.path is None:
        raise ConfigError("density.kind = 'csv' needs density.path")
    try:
        rho = read_density_csv(d.path, grid)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    count = rho.particle_count
    if abs(count - N) > 1e-8 * N:
        raise ConfigError(f"density in {d.path} integrates to {count}, model has N={N}")
    return rho


def _fine(rho) -> FineDensity:
    return embed(rho) if isinstance(rho, CoarseDensity) else rho


def _coarse(rho, level: int, model: ModelSpec) -> CoarseDensity:
    if isinstance(rho, CoarseDensity):
        if rho.level < level:
            raise ConfigError(f"density file is at level {rho.level}, experiment needs level {level}")
        return project(embed(rho), level, model.hierarchy)
    return project(rho, level, model.hierarchy)


def _check_level(model: ModelSpec, level: int, what: str) -> int:
    if level not in model.hierarchy.levels:
        raise ConfigError(f"{what} level {level} outside 0..{model.hierarchy.depth}")
    return level


def _make(name, statement, measured, threshold, passed, rows=None, details=None):
    return checks.CheckResult(name, statement, float(measured), float(threshold), bool(passed), rows or [], details or {})


# -- single experiments ------------------------------------------------------


def run_invert(cfg: RunConfig, rng) -> Outcome:
    model = build_model(cfg)
    level = _check_level(model, cfg.experiment.invert.level, "invert")
    tol = cfg.tolerances
    rho = _coarse(build_density(cfg, model, rng), level, model)
    res = lieb_maximize(model, rho, tol=min(tol.inner, tol.inversion))
    gauge = abs(ground_energy(model, res.potential))
    cap = model.n_particles * f_max(model, level)
    out = Outcome()
    out.documents["inversion"] = res.to_dict()
    out.texts["density.csv"] = density_to_csv(rho)
    out.texts["potential.csv"] = potential_to_csv(res.potential)
    out.texts["lambda_density.csv"] = density_to_csv(res.lambda_density)
    out.tables["residual_trace"] = [{"iteration": i, "residual": r} for i, r in enumerate(res.trace)]
    out.checks += [
        _make("inversion residual", "the representing potential reproduces the density", res.residual, tol.inversion, res.converged and res.residual <= tol.inversion),
        _make("gauge", "E[v[rho]] = 0", gauge, tol.gauge, gauge <= tol.gauge),
        _make("energy bound", "0 <= F^n <= N f_max(n)", res.F_value, cap, 0 <= res.F_value <= cap + 1e-8),
    ]
    d = cfg.density
    if d.kind == "forward" and d.potential_level is not None and d.potential_level <= level:
        v0 = random_smooth_potential(model.hierarchy, d.potential_level, np.random.default_rng(cfg.seed), amplitude=d.amplitude, modes=d.modes)
        diff = res.potential.values - v0.refine(level).values
        err = float((diff.max() - diff.min()) / 2)
        out.checks.append(_make("potential recovery", "v[rho] equals the generating potential modulo constants", err, 1e-4 * v0.sup_norm(), err <= 1e-4 * v0.sup_norm()))
    return out


def _sweep_rows(rows) -> list[dict]:
    out, prev = [], None
    for r in rows:
        out.append(
            {
                "n": r.n,
                "D_n": r.D_n,
                "F_n": r.F_n,
                "dist_1": r.dist_p[1],
                "dist_2": r.dist_p[2],
                "lambda_dist_1": r.lambda_dist_p[1],
                "lambda_dist_2": r.lambda_dist_p[2],
                "v_sup": r.v_sup,
                "converged": r.converged,
                "residual": r.residual,
                "monotone": "OK" if prev is None or r.F_n >= prev - 1e-7 else "VIOLATION",
            }
        )
        prev = r.F_n
    return out


def run_sweep(cfg: RunConfig, rng) -> Outcome:
    model = build_model(cfg)
    p, tol = cfg.experiment.sweep, cfg.tolerances
    rho = _fine(build_density(cfg, model, rng))
    for n in p.levels:
        _check_level(model, n, "sweep")
    if p.perturbed:
        rows = perturbed_scale_sweep(model, rho, p.levels, amplitude=p.amplitude, rng=rng, tol=tol.inner)
    else:
        rows = scale_sweep(model, rho, p.levels, tol=tol.inner)
    table = _sweep_rows(rows)
    F = np.array([r.F_n for r in rows])
    violation = float(max(0.0, -np.diff(F).min())) if F.size > 1 else 0.0
    gap = abs(F[-1] - F[-2]) / abs(F[-1]) if F.size > 1 else 0.0
    coarse = [r for r in rows if r.n != model.hierarchy.depth]
    fits = {}
    if len(coarse) >= 2:
        fits["dist_1_vs_D"] = fit_power_law([r.D_n for r in coarse], [r.dist_p[1] for r in coarse])
    out = Outcome(tables={"sweep": table}, documents={"fits": fits})
    out.verdicts["reference"] = "F[rho] is the grid-level inversion"
    out.checks += [
        _make("converged", "every level inverts", sum(not r.converged for r in rows), 0, all(r.converged for r in rows)),
        _make("grid gap", "finest coarse level near the grid value", gap, tol.grid_gap, gap <= tol.grid_gap),
    ]
    if p.perturbed:
        # perturbed levels are projections of different densities, so only convergence is expected
        spread = np.abs(F[:-1] - F[-1])
        shrink = float(spread[-1] / spread[0]) if spread.size > 1 and spread[0] > 0 else 0.0
        out.checks.append(_make("gap shrinks", "|F^n - F| at the finest level below the coarsest", shrink, 1.0, shrink < 1.0))
    else:
        out.checks.insert(1, _make("monotone F^n", "F^n increases with n", violation, tol.monotone, violation <= tol.monotone))
    return out


def run_probe(cfg: RunConfig, rng) -> Outcome:
    model = build_model(cfg)
    p, tol = cfg.experiment.probe, cfg.tolerances
    for n in p.levels:
        _check_level(model, n, "probe")
    rho = _fine(build_density(cfg, model, rng))
    verdict = representability_probe(model, rho, p.levels, v_cap=p.v_cap, stabilization=p.stabilization, growth=p.growth, tol=tol.inner)
    ev = verdict.evidence
    table = [
        {"n": n, "v_sup": v, "F_n": f, "converged": c}
        for n, v, f, c in zip(ev["levels"], ev["v_sup"], ev["F_n"], ev["converged"])
    ]
    out = Outcome(tables={"probe": table}, documents={"verdict": {"kind": verdict.kind, "evidence": ev, "fitted_rates": verdict.fitted_rates}})
    out.verdicts["probe"] = verdict.kind
    F = np.array(ev["F_n"])
    violation = float(max(0.0, -np.diff(F).min())) if F.size > 1 else 0.0
    out.checks.append(_make("monotone F^n", "F^n increases with n", violation, tol.monotone, violation <= tol.monotone))
    return out


def run_quasi(cfg: RunConfig, rng) -> Outcome:
    model = build_model(cfg)
    p = cfg.experiment.quasi
    rho = _coarse(build_density(cfg, model, rng), _check_level(model, p.level, "quasi"), model)
    radii = np.geomspace(p.radius_max, p.radius_min, p.radii) * model.n_particles
    table = quasi_continuity_probe(model, rho, radii, samples=p.samples, rng=rng, tol=cfg.tolerances.inner)
    col = np.array([r["max_product_distance"] for r in table])
    ratio = float(col[-1] / col[0]) if col[0] > 0 else 0.0
    decreasing = bool(np.all(np.diff(col) < 0))
    out = Outcome(tables={"quasi": table})
    out.checks += [
        _make("strictly decreasing", "max ||v'rho' - v rho||_1 decreases with the radius", float(not decreasing), 0, decreasing),
        _make("decay ratio", "last/first row ratio", ratio, 0.1, ratio <= 0.1),
    ]
    return out


def run_modulus(cfg: RunConfig, rng) -> Outcome:
    model = build_model(cfg)
    p = cfg.experiment.modulus
    rho = _coarse(build_density(cfg, model, rng), _check_level(model, p.level, "modulus"), model)
    radii = np.asarray(p.radii, float) * model.n_particles
    table = continuity_modulus(model, rho, radii, samples=p.samples, mode=p.mode, rng=rng)
    col = np.array([r["modulus"] for r in table])
    decreasing = bool(np.all(np.diff(col) <= 0))
    out = Outcome(tables={"modulus": table})
    out.checks.append(_make("decreasing", "max |F' - F| decreases with the radius", float(not decreasing), 0, decreasing))
    small = [r for r in table if 0 < r["radius"] <= 1e-6 * model.n_particles]
    if small:
        worst = max(r["modulus"] for r in small)
        out.checks.append(_make("small-radius modulus", "modulus <= 1e-5 at radius 1e-6 N", worst, 1e-5, worst <= 1e-5))
    return out


def run_blowup(cfg: RunConfig, rng) -> Outcome:
    model = build_model(cfg)
    p = cfg.experiment.blowup
    for n in p.node_levels:
        _check_level(model, n, "blowup")
    grid = model.grid
    ell_min = p.ell_min if p.ell_min is not None else 4 * grid.spacing * (1 + 1e-9)
    ells = np.geomspace(p.ell_max, ell_min, p.ells)
    node = checks.node_blowup(model, p.node_levels, cfg.density.node)
    osc = checks.oscillation(
        model,
        _check_level(model, p.level, "blowup"),
        p.amplitude,
        ells,
        omega=cfg.density.omega,
        support_end=p.support_end,
    )
    out = Outcome(tables={"node_probe": node.rows, "oscillation": osc[0].rows})
    out.verdicts["node_probe"] = node.details["verdict"]
    out.documents["oscillation"] = osc[0].details
    out.checks += [node, *osc]
    return out


def run_ks(cfg: RunConfig, rng) -> Outcome:
    model = build_model(cfg)
    p = cfg.experiment.ks
    rho = _coarse(build_density(cfg, model, rng), _check_level(model, p.level, "ks"), model)
    results = checks.kohn_sham_closure(model, rho, p.directions, rng, identity_tol=cfg.tolerances.identity)
    rep = results[0].details
    out = Outcome(documents={"ks": rep})
    if results[2].rows:
        out.tables["xc_directions"] = results[2].rows
    hier = model.hierarchy
    rows = []
    for i, (a, b) in enumerate(zip(hier.cell_edges(p.level)[:-1], hier.cell_edges(p.level)[1:])):
        rows.append({"x_left": a, "x_right": b, **{k: rep[k][i] for k in ("v", "v_s", "phi", "v_xc")}})
    out.tables["ks_potentials"] = rows
    out.checks += results if p.directions else results[:2]
    return out


# -- verify-all --------------------------------------------------------------


def _verify_sections(cfg: RunConfig):
    """(name, callable(rng) -> list[CheckResult]) in a fixed order."""
    p, tol = cfg.experiment.verify, cfg.tolerances
    model = build_model(cfg)
    one = build_model(cfg, 1)
    two = build_model(cfg, 2)
    hier = model.hierarchy
    levels = [n for n in (1, 2, 3, 4, 5) if n < hier.depth]

    def as_list(x):
        return x if isinstance(x, list) else [x]

    sections = [
        ("inversion", lambda rng: checks.inversion_fixed_point(model, levels[:4], p.inversions_per_level, rng, tol.inversion, tol.gauge)),
        ("one_particle", lambda rng: as_list(checks.one_particle_identity(one, levels, p.samples, rng))),
        ("recovery", lambda rng: as_list(checks.potential_recovery(model, min(4, hier.depth), p.samples, rng))),
        (
            "monotone",
            lambda rng: checks.monotone_convergence(
                model, [random_smooth_density(model.grid, model.n_particles, rng) for _ in range(2)], levels, tol.monotone, tol.grid_gap
            ),
        ),
        ("derivative", lambda rng: checks.directional_derivatives(model, 3, p.directions, rng, tol.derivative, tol.quotient)),
        ("quasi", lambda rng: as_list(checks.quasi_continuity(model, weak_density(model, rng), np.geomspace(1e-1, 1e-3, 5) * model.n_particles, p.samples, rng))),
        ("continuity", lambda rng: as_list(checks.continuity(model, weak_density(model, rng), np.array([1e-2, 1e-3, 1e-4, 1e-5, 1e-6]) * model.n_particles, p.samples, rng))),
        ("bounds", lambda rng: checks.bounds_suite(model, p.bound_densities, rng, levels)),
        ("duality", lambda rng: checks.duality_suite(model, 3, p.densities, p.potentials, p.triples, rng, tol.duality)),
        ("kohn_sham", lambda rng: checks.kohn_sham_closure(two, weak_density(two, rng), p.ks_directions, rng, identity_tol=tol.identity)),
        ("node", lambda rng: as_list(checks.node_blowup(model, levels))),
        ("oscillation", lambda rng: checks.oscillation(model)),
    ]
    return sections


def run_verify_all(cfg: RunConfig, rng=None) -> Outcome:
    sections = _verify_sections(cfg)

    def run(item):
        index, (name, fn) = item
        return name, fn(np.random.default_rng([cfg.seed, index]))

    workers = min(thread_cap(), len(sections))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, enumerate(sections)))
    else:
        results = [run(item) for item in enumerate(sections)]

    out = Outcome()
    summary = []
    for name, section in results:
        for check in section:
            out.checks.append(check)
            summary.append({"section": name, **check.summary()})
            if check.rows:
                slug = check.name.replace(" ", "_").replace("^", "").replace("-", "_").lower()
                out.tables[f"{name}_{slug}"] = check.rows
    out.tables["verify_all"] = summary
    out.verdicts = {c.name: "PASS" if c.passed else "FAIL" for c in out.checks}
    return out


EXPERIMENTS = {
    "invert": run_invert,
    "sweep": run_sweep,
    "probe": run_probe,
    "quasi": run_quasi,
    "modulus": run_modulus,
    "blowup": run_blowup,
    "ks": run_ks,
    "verify-all": run_verify_all,
}


def run_experiment(name: str, cfg: RunConfig) -> Outcome:
    rng = np.random.default_rng(cfg.seed)
    return EXPERIMENTS[name](cfg, rng)
