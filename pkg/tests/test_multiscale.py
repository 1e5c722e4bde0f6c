import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgdft import (
    CoarseDensity,
    FineDensity,
    Grid,
    NotInteriorDensity,
    Potential,
    ScaleHierarchy,
    continuity_modulus,
    f_max,
    ground_energy,
    oscillation_blowup,
    project,
    quasi_continuity_probe,
    representability_probe,
    scale_sweep,
)
from cgdft.multiscale import _hat_F, fit_power_law, perturbed_scale_sweep, plateau_bump, random_neighbor
from cgdft.sampling import (
    box_ground_density,
    flat_top_density,
    forward_density,
    harmonic_density,
    node_density,
    random_interior_density,
    random_smooth_potential,
    weak_density,
)


def test_fit_power_law_exact():
    x = np.geomspace(1e-3, 1, 7)
    slope, r2 = fit_power_law(x, 3 * x**2)
    assert slope == pytest.approx(2.0) and r2 == pytest.approx(1.0)


class TestScaleSweep:
    def test_box_density(self, model1):
        rho = box_ground_density(model1.grid)
        rows = scale_sweep(model1, rho)
        assert [r.n for r in rows] == [1, 2, 3, 4, 5, 7]
        F = np.array([r.F_n for r in rows])
        assert np.all(np.diff(F) >= -1e-9)
        # the grid row is the empty-box ground state
        box = ground_energy(model1, Potential.zeros(model1.hierarchy, 0))
        assert F[-1] == pytest.approx(box, rel=1e-8)
        # a smooth density is resolved at first order in the cell width
        slope, _ = fit_power_law([r.D_n for r in rows[:-1]], [r.dist_p[1] for r in rows[:-1]])
        assert slope >= 0.9
        assert all(r.converged for r in rows)

    def test_flat_top_is_bounded_by_its_grid_value(self, model1):
        rho = flat_top_density(model1.grid, 1)
        rows = scale_sweep(model1, rho, levels=(1, 3, 5))
        assert all(r.F_n <= rows[-1].F_n + 1e-9 for r in rows)

    def test_rejects_vanishing_density(self, model1):
        values = box_ground_density(model1.grid).values.copy()
        values[10] = 0.0
        with pytest.raises(NotInteriorDensity):
            scale_sweep(model1, FineDensity(model1.grid, values))

    def test_perturbed_sweep_converges(self, model1):
        rho = box_ground_density(model1.grid)
        plain = scale_sweep(model1, rho)
        moved = perturbed_scale_sweep(model1, rho, amplitude=0.5, rng=np.random.default_rng(0))
        assert moved[-1].F_n == pytest.approx(plain[-1].F_n, rel=1e-10)
        gaps = [abs(a.F_n - plain[-1].F_n) for a in moved[:-1]]
        assert gaps[-1] < gaps[0]
        # the coarse densities really were perturbed
        assert any(abs(a.F_n - b.F_n) > 1e-8 for a, b in zip(moved[:-1], plain[:-1]))


class TestProbe:
    def test_forward_density_is_representable(self, model1):
        hier = model1.hierarchy
        v0 = random_smooth_potential(hier, 3, np.random.default_rng(1))
        rho = forward_density(model1, v0)
        verdict = representability_probe(model1, rho, levels=(1, 2, 3, 4, 5), reference=v0)
        assert verdict.kind == "representable"
        # from level 3 on, the projection is represented by v0 itself
        assert max(verdict.evidence["window_error"][2:]) <= 1e-6 * v0.sup_norm()
        assert "v_sup_vs_D" in verdict.fitted_rates

    def test_node_density_blows_up(self, model1):
        verdict = representability_probe(model1, node_density(model1.grid, 1))
        v = verdict.evidence["v_sup"]
        assert verdict.kind == "blowup"
        assert v[-1] >= 2 * v[-3]

    def test_few_levels_are_inconclusive(self, model1):
        verdict = representability_probe(model1, node_density(model1.grid, 1), levels=(1, 2), stabilization=1e-9)
        assert verdict.kind == "inconclusive"


class TestNeighbors:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-6, 0.2))
    def test_both_mode_keeps_mass(self, seed, radius):
        hier = ScaleHierarchy(Grid(1.0, 32))
        rng = np.random.default_rng(seed)
        rho = random_interior_density(hier, 3, 1, rng)
        other = random_neighbor(rho, radius, rng)
        assert other is not None
        assert other.particle_count == pytest.approx(1.0, abs=1e-12)
        assert (other - rho).l1_norm() == pytest.approx(radius, rel=1e-9)
        assert other.is_interior()

    def test_lower_mode_removes_mass(self, model1):
        rng = np.random.default_rng(2)
        rho = random_interior_density(model1.hierarchy, 3, 1, rng)
        other = random_neighbor(rho, 0.05, rng, mode="lower")
        assert np.all(other.averages <= rho.averages)
        assert rho.particle_count - other.particle_count == pytest.approx(0.05)

    def test_impossible_radius(self, model1):
        rho = random_interior_density(model1.hierarchy, 2, 1, np.random.default_rng(3))
        assert random_neighbor(rho, 10.0, np.random.default_rng(0), attempts=5) is None


class TestContinuity:
    def test_quasi_continuity_table(self, model1):
        rng = np.random.default_rng(4)
        rho = weak_density(model1, rng)
        table = quasi_continuity_probe(model1, rho, [1e-1, 1e-2, 1e-3], samples=5, rng=rng)
        col = [r["max_product_distance"] for r in table]
        assert np.all(np.diff(col) < 0)
        assert all(r["failures"] == 0 and r["samples"] == 5 for r in table)

    @pytest.mark.parametrize("mode", ["both", "lower"])
    def test_modulus_is_lipschitz_small(self, model1, mode):
        rng = np.random.default_rng(5)
        rho = weak_density(model1, rng)
        table = continuity_modulus(model1, rho, [0.0, 1e-2, 1e-4], samples=5, mode=mode, rng=rng)
        assert table[0]["modulus"] == 0.0
        assert table[1]["modulus"] > table[2]["modulus"] > 0
        bound = model1.n_particles * f_max(model1, 3)
        assert all(r["modulus"] <= bound * r["radius"] for r in table)

    def test_lower_mode_uses_homogeneous_extension(self, model1):
        # scaling rho by c < 1 gives c F[rho] exactly
        rho = weak_density(model1, np.random.default_rng(6))
        base = _hat_F(model1, rho, 1e-12, None)
        assert _hat_F(model1, rho * 0.9, 1e-12, None) == pytest.approx(0.9 * base, rel=1e-12)


class TestOscillation:
    def test_plateau_bump(self, grid):
        sharp = plateau_bump(grid, 0.3, 0.7)
        assert set(np.unique(sharp)) <= {0.0, 1.0}
        smooth = plateau_bump(grid, 0.3, 0.7, edge_width=0.1)
        assert smooth.min() >= 0 and smooth.max() <= 1
        assert np.max(np.abs(np.diff(smooth))) < 0.2
        assert np.all(smooth[sharp == 1] == 1)

    def test_zero_amplitude_leaves_the_density(self, model1):
        rho = project(harmonic_density(model1), 3, model1.hierarchy)
        out = oscillation_blowup(model1, rho, 0.0, [0.05, 0.035])
        assert all(r["drift"] <= 1e-8 for r in out["rows"])

    def test_pairing_decays_and_drift_is_small(self, model1):
        rho_fine = harmonic_density(model1)
        rho = project(rho_fine, 3, model1.hierarchy)
        ells = np.geomspace(0.06, 4 * model1.grid.spacing * (1 + 1e-9), 5)
        out = oscillation_blowup(model1, rho, 10.0, ells, support=(0.35, 0.99), reference=rho_fine)
        pair = [abs(r["pairing_reference"]) for r in out["rows"]]
        assert pair[-1] < pair[0]
        assert out["rows"][-1]["drift"] < out["rows"][0]["potential_sup"]
        assert set(out["fits"]) == {"pairing_lambda", "pairing_reference"}

    def test_rejects_sub_grid_wavelength(self, model1):
        rho = project(harmonic_density(model1), 3, model1.hierarchy)
        with pytest.raises(ValueError, match="resolution"):
            oscillation_blowup(model1, rho, 1.0, [model1.grid.spacing])


def test_weak_density_is_interior(model2):
    rho = weak_density(model2, np.random.default_rng(7))
    assert isinstance(rho, CoarseDensity) and rho.is_interior()
    assert rho.particle_count == pytest.approx(2.0)
