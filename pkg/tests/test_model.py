import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cgdft import (
    CoarseDensity,
    FineDensity,
    Grid,
    Potential,
    ScaleHierarchy,
    discrete_gradient,
    embed,
    inner,
    norm_lp,
    project,
    von_weizsacker,
)
from cgdft.model import coarsen, root_density_seminorm, von_weizsacker_report

GRID = Grid(1.0, 64)
HIER = ScaleHierarchy(GRID)

positive_values = arrays(np.float64, GRID.points, elements=st.floats(0.01, 10.0))
signed_values = arrays(np.float64, GRID.points, elements=st.floats(-5.0, 5.0))
levels = st.integers(0, HIER.depth)


class TestGrid:
    def test_spacing_and_points(self):
        g = Grid(1.0, 128)
        assert g.spacing == pytest.approx(1 / 129)
        assert g.x[0] == pytest.approx(g.spacing)
        assert g.x[-1] == pytest.approx(1 - g.spacing)

    @pytest.mark.parametrize("points", [15, 24, 8, 0])
    def test_rejects_bad_point_counts(self, points):
        with pytest.raises(ValueError):
            Grid(1.0, points)

    def test_rejects_bad_length(self):
        with pytest.raises(ValueError):
            Grid(0.0, 16)


class TestHierarchy:
    def test_levels_and_cells(self):
        hier = ScaleHierarchy(Grid(1.0, 128))
        assert hier.depth == 7
        assert list(hier.levels) == list(range(8))
        assert hier.n_cells(3) == 8
        assert hier.points_per_cell(3) == 16
        assert hier.cell_width(7) == pytest.approx(hier.grid.spacing)

    def test_widths_partition_the_box(self):
        for n in HIER.levels:
            assert HIER.widths(n).sum() == pytest.approx(GRID.points * GRID.spacing)

    def test_cell_edges(self):
        edges = HIER.cell_edges(2)
        assert edges.size == 5
        np.testing.assert_allclose(np.diff(edges), HIER.cell_width(2))

    @pytest.mark.parametrize("level", [-1, 7, 1.5])
    def test_invalid_level(self, level):
        with pytest.raises(ValueError):
            HIER.check_level(level)


class TestContainers:
    def test_fine_density_is_read_only(self):
        rho = FineDensity(GRID, np.ones(GRID.points))
        with pytest.raises(ValueError):
            rho.values[0] = 2.0

    def test_fine_density_shape_and_finiteness(self):
        with pytest.raises(ValueError):
            FineDensity(GRID, np.ones(3))
        with pytest.raises(ValueError):
            FineDensity(GRID, np.full(GRID.points, np.nan))

    def test_normalized(self):
        rho = FineDensity(GRID, np.arange(1, GRID.points + 1, dtype=float)).normalized(2.0)
        assert rho.particle_count == pytest.approx(2.0)

    def test_coarse_predicates(self):
        avg = np.array([1.0, 0.0, 2.0, 1.0])
        rho = CoarseDensity(HIER, 2, avg)
        assert rho.in_plus() and not rho.is_interior()
        assert CoarseDensity(HIER, 2, -avg).in_plus() is False

    def test_coarse_level_mismatch(self):
        a = CoarseDensity(HIER, 1, np.ones(2))
        b = CoarseDensity(HIER, 2, np.ones(4))
        with pytest.raises(ValueError):
            a + b

    def test_potential_shape(self):
        with pytest.raises(ValueError):
            Potential(HIER, 2, np.zeros(3))

    def test_potential_shift_records_offset(self):
        v = Potential(HIER, 2, np.arange(4.0)).shifted(1.5).shifted(-0.5)
        assert v.gauge_offset == pytest.approx(1.0)
        np.testing.assert_allclose(v.values, np.arange(4.0) + 1.0)

    def test_potential_refine_keeps_step_function(self):
        v = Potential(HIER, 1, np.array([1.0, -2.0]))
        np.testing.assert_array_equal(v.refine(4).on_grid(), v.on_grid())
        with pytest.raises(ValueError):
            v.refine(4).refine(1)

    def test_from_function_averages(self):
        v = Potential.from_function(HIER, 0, lambda x: x)
        assert v.values[0] == pytest.approx(GRID.x.mean())


class TestProjection:
    @given(positive_values, levels)
    def test_round_trip(self, values, n):
        # pi_n iota_n is the identity on level-n densities
        coarse = project(FineDensity(GRID, values), n, HIER)
        again = project(embed(coarse), n, HIER)
        np.testing.assert_allclose(again.averages, coarse.averages, rtol=1e-13)

    @given(positive_values, st.integers(0, HIER.depth), st.integers(0, HIER.depth))
    def test_telescoping(self, values, a, b):
        m, n = sorted((a, b))
        rho = FineDensity(GRID, values)
        np.testing.assert_allclose(
            coarsen(project(rho, n, HIER), m).averages, project(rho, m, HIER).averages, rtol=1e-12
        )

    @given(positive_values, levels)
    def test_l1_isometry_and_mass(self, values, n):
        rho = FineDensity(GRID, values)
        coarse = project(rho, n, HIER)
        assert coarse.particle_count == pytest.approx(rho.particle_count, rel=1e-12)
        assert norm_lp(embed(coarse), 1) == pytest.approx(norm_lp(coarse, 1), rel=1e-12)

    @given(signed_values, levels, st.sampled_from([1.0, 2.0, 3.0, np.inf]))
    def test_lp_contraction(self, values, n, p):
        # cell averaging never increases an L^p norm (Jensen)
        rho = FineDensity(GRID, values)
        assert norm_lp(project(rho, n, HIER), p) <= norm_lp(rho, p) * (1 + 1e-12) + 1e-14

    @given(positive_values, signed_values, levels)
    def test_orthogonality(self, rho_values, w_values, n):
        # rho - iota pi rho pairs to zero with every level-n step potential
        rho = FineDensity(GRID, rho_values)
        rest = rho.values - embed(project(rho, n, HIER)).values
        v = Potential(HIER, n, w_values.reshape(HIER.n_cells(n), -1).mean(axis=1))
        assert abs(GRID.spacing * v.on_grid() @ rest) <= 1e-10 * (1 + np.abs(rho_values).sum())

    @given(positive_values, signed_values, st.integers(0, 4), st.integers(0, 2))
    def test_pairing_is_level_independent(self, rho_values, w, n, extra):
        rho = FineDensity(GRID, rho_values)
        v = Potential(HIER, n, w.reshape(HIER.n_cells(n), -1).mean(axis=1))
        finer = min(HIER.depth, n + extra)
        direct = GRID.spacing * v.on_grid() @ rho.values
        assert inner(v, rho) == pytest.approx(direct, rel=1e-12, abs=1e-12)
        assert inner(v, project(rho, finer, HIER)) == pytest.approx(direct, rel=1e-12, abs=1e-12)

    def test_coarsen_rejects_refinement(self):
        with pytest.raises(ValueError):
            coarsen(CoarseDensity(HIER, 1, np.ones(2)), 2)

    def test_inner_rejects_finer_potential(self):
        with pytest.raises(ValueError):
            inner(Potential.zeros(HIER, 3), CoarseDensity(HIER, 1, np.ones(2)))


class TestNorms:
    def test_constant(self):
        rho = FineDensity(GRID, np.full(GRID.points, 2.0))
        width = GRID.points * GRID.spacing
        assert norm_lp(rho, 1) == pytest.approx(2 * width)
        assert norm_lp(rho, 2) == pytest.approx(np.sqrt(4 * width))
        assert norm_lp(rho, np.inf) == 2.0

    def test_rejects_p_below_one(self):
        with pytest.raises(ValueError):
            norm_lp(FineDensity(GRID, np.ones(GRID.points)), 0.5)


class TestGradients:
    def test_linear_profile_exact(self):
        rho = FineDensity(GRID, 3.0 * GRID.x + 1.0)
        np.testing.assert_allclose(discrete_gradient(rho), 3.0, rtol=1e-10)

    def test_von_weizsacker_of_box_ground_state(self):
        # one particle in the box: T_W = pi^2 / 2 up to the grid error
        grid = Grid(1.0, 128)
        rho = FineDensity(grid, np.sin(np.pi * grid.x) ** 2).normalized(1.0)
        assert von_weizsacker(rho) == pytest.approx(np.pi**2 / 2, rel=2e-4)

    def test_von_weizsacker_matches_lattice_kinetic_energy(self):
        # T_W(rho) equals <psi| -Laplacian/2 |psi> with psi = sqrt(rho h)
        rng = np.random.default_rng(3)
        grid = Grid(1.0, 32)
        psi = rng.uniform(0.1, 1.0, grid.points)
        psi /= np.linalg.norm(psi)
        h = grid.spacing
        lap = (np.diag(np.full(grid.points, 2.0)) - np.eye(grid.points, k=1) - np.eye(grid.points, k=-1)) / h**2
        rho = FineDensity(grid, psi**2 / h)
        assert von_weizsacker(rho) == pytest.approx(0.5 * psi @ lap @ psi, rel=1e-12)

    def test_gradient_form_converges(self):
        # the pointwise |grad rho|^2 / 8 rho form agrees at first order in h
        gaps = []
        for m in (128, 256, 512):
            grid = Grid(1.0, m)
            rho = FineDensity(grid, np.sin(np.pi * grid.x) ** 2 * (1.5 + np.cos(2 * np.pi * grid.x))).normalized(1)
            gaps.append(von_weizsacker_report(rho).discrepancy)
        ratios = np.array(gaps[1:]) / np.array(gaps[:-1])
        assert np.all((ratios > 0.4) & (ratios < 0.6))

    def test_oscillatory_scaling(self):
        # relative T_W increase under (1 + eps eta sin(x/ell))^2 modulation ~ eps^2 / ell^2
        grid = Grid(1.0, 128)
        base = FineDensity(grid, np.sin(np.pi * grid.x) ** 2).normalized(1.0)
        eta = np.sin(np.pi * grid.x) ** 2
        ells = np.geomspace(0.06, 4 * grid.spacing, 6)
        gains = []
        for ell in ells:
            mod = (1 + 0.05 * eta * np.sin(grid.x / ell)) ** 2
            gains.append(von_weizsacker(FineDensity(grid, base.values * mod).normalized(1.0)) - von_weizsacker(base))
        slope = np.polyfit(np.log(ells), np.log(gains), 1)[0]
        assert -2.2 <= slope <= -1.8

    def test_negative_density_rejected(self):
        with pytest.raises(ValueError):
            root_density_seminorm(FineDensity(GRID, -np.ones(GRID.points)))

    @settings(max_examples=50)
    @given(positive_values)
    def test_cauchy_schwarz(self, values):
        # ||grad rho||_1 <= 2 sqrt(N) ||grad sqrt rho||_2 on the lattice with wall links
        rho = FineDensity(GRID, values)
        padded = np.concatenate(([0.0], values, [0.0]))
        grad_l1 = np.abs(np.diff(padded)).sum()
        N = rho.particle_count
        assert grad_l1 <= 2 * np.sqrt(N) * np.sqrt(root_density_seminorm(rho)) * (1 + 1e-12)
