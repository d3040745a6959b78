"""P1 finite element levels, solves, functionals, and error measures."""

import numpy as np
import pytest

from invert.fem import (
    ObservationSet,
    WorkTally,
    energy_norm,
    fem_level,
    h1_error_vs_gradient,
    h1_seminorm_error,
    load_vector,
    observe,
    prolong_vec,
    solve,
)
from invert.field import builtin_field


@pytest.fixture(scope="module")
def fld1():
    return builtin_field(1, 2.0, 1.0, 4)


@pytest.fixture(scope="module")
def fld2():
    return builtin_field(2, 2.0, 1.0, 4)


class TestLevels:
    def test_1d_dof_count(self):
        for level in range(0, 6):
            lvl = fem_level(1, level)
            assert lvl.ndof == 2 ** (level + 1) - 1

    def test_2d_dof_count(self):
        for level in range(0, 4):
            lvl = fem_level(2, level)
            assert lvl.ndof == (2 ** (level + 1) - 1) ** 2

    def test_mesh_width_halves(self):
        assert fem_level(1, 3).h == pytest.approx(fem_level(1, 2).h / 2)

    def test_load_vector_interior_entries(self):
        """Unit load integrates each interior hat to the cell width."""
        lvl = fem_level(1, 3)
        b = load_vector(lvl)
        np.testing.assert_allclose(b, lvl.h)

    def test_rejects_bad_dim(self):
        with pytest.raises(ValueError):
            fem_level(3, 2)


class TestSolve1D:
    def test_constant_coefficient_is_nodally_exact(self, fld1):
        """K = 1, f = 1 reproduces x(1-x)/2 at the nodes."""
        lvl = fem_level(1, 4)
        sol = solve(lvl, fld1, np.zeros(4), tol=1e-13)
        x = lvl.nodes
        np.testing.assert_allclose(sol.coeffs, 0.5 * x * (1.0 - x), atol=1e-11)

    def test_zero_load_gives_zero_solution(self, fld1):
        lvl = fem_level(1, 3)
        sol = solve(lvl, fld1, np.zeros(4), f=lambda x: np.zeros_like(x))
        np.testing.assert_allclose(sol.coeffs, 0.0)
        assert sol.iters == 0

    def test_deterministic(self, fld1):
        lvl = fem_level(1, 4)
        u = np.array([0.4, -0.2, 0.1, 0.3])
        a = solve(lvl, fld1, u)
        b = solve(lvl, fld1, u)
        assert np.array_equal(a.coeffs, b.coeffs)
        assert a.iters == b.iters

    def test_interleaved_solves_do_not_interfere(self, fld1):
        lvl3, lvl5 = fem_level(1, 3), fem_level(1, 5)
        u = np.array([0.4, -0.2, 0.1, 0.3])
        alone3 = solve(lvl3, fld1, u).coeffs
        alone5 = solve(lvl5, fld1, u).coeffs
        again3 = solve(lvl3, fld1, u)
        again5 = solve(lvl5, fld1, u)
        assert np.array_equal(alone3, again3.coeffs)
        assert np.array_equal(alone5, again5.coeffs)

    def test_work_accounting_positive(self, fld1):
        sol = solve(fem_level(1, 4), fld1, np.array([0.5, 0.0, 0.0, 0.0]))
        assert sol.ndof == 31
        assert sol.flops > 0
        assert sol.iters >= 1

    def test_stability_bound(self, fld1):
        """Energy norm stays below ||f|| / (pi * K_min) for prior draws."""
        rng = np.random.default_rng(3)
        lvl = fem_level(1, 4)
        bound = 1.0 / (np.pi * fld1.k_min)
        for _ in range(10):
            u = rng.uniform(-1.0, 1.0, 4)
            sol = solve(lvl, fld1, u, tol=1e-12)
            assert energy_norm(1, 4, sol.coeffs) <= bound

    def test_ritz_energy_monotone_in_level(self, fld1):
        """Nested spaces drive the energy seminorm up toward the limit."""
        u = np.array([0.4, -0.2, 0.1, 0.3])
        norms = [energy_norm(1, lv, solve(fem_level(1, lv), fld1, u,
                                          tol=1e-12).coeffs)
                 for lv in range(2, 7)]
        assert np.all(np.diff(norms) >= -1e-10)


class TestSolve2D:
    def test_matches_dense_reference(self, fld2):
        from invert.oracle import dense_reference_solve
        lvl = fem_level(2, 3)
        u = np.array([0.3, -0.4, 0.2, 0.1])
        pcg = solve(lvl, fld2, u, tol=1e-12)
        dense = dense_reference_solve(lvl, fld2, u)
        np.testing.assert_allclose(pcg.coeffs, dense, atol=1e-8)

    def test_manufactured_rate(self, fld2):
        """H1 error for P = sin(pi x)sin(pi y) halves per level."""
        def f(x, y):
            return 2.0 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)

        def grad(p):
            gx = np.pi * np.cos(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1])
            gy = np.pi * np.sin(np.pi * p[..., 0]) * np.cos(np.pi * p[..., 1])
            return np.stack([gx, gy], axis=-1)

        errs = []
        for lv in (2, 3, 4):
            sol = solve(fem_level(2, lv), fld2, np.zeros(4), f=f, tol=1e-11)
            errs.append(h1_error_vs_gradient(sol, grad))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(ratios > 1.8)
        assert np.all(ratios < 2.2)


class TestObservations:
    def test_weights_have_unit_mass(self):
        """Integrate each window piecewise so the quadrature sees no kinks."""
        obs = ObservationSet(1, 4)
        x, w = np.polynomial.legendre.leggauss(24)
        for i in range(4):
            a, b = i / 4.0, (i + 1) / 4.0
            m = 0.25 * (b - a)
            total = 0.0
            for lo, hi in ((a, a + m), (a + m, b - m), (b - m, b)):
                xs = 0.5 * (hi - lo) * (x + 1.0) + lo
                total += obs.weight_values(xs)[i] @ (0.5 * (hi - lo) * w)
            np.testing.assert_allclose(total, 1.0, rtol=1e-12)

    def test_zero_solution_observes_zero(self, fld1):
        lvl = fem_level(1, 4)
        sol = solve(lvl, fld1, np.zeros(4), f=lambda x: np.zeros_like(x))
        np.testing.assert_allclose(observe(sol, ObservationSet(1, 4)), 0.0)

    def test_observations_converge_with_level(self, fld1):
        obs = ObservationSet(1, 4)
        u = np.array([0.4, -0.2, 0.1, 0.3])
        ref = observe(solve(fem_level(1, 8), fld1, u, tol=1e-12), obs)
        errs = [np.max(np.abs(observe(solve(fem_level(1, lv), fld1, u,
                                            tol=1e-12), obs) - ref))
                for lv in (3, 4, 5)]
        assert errs[0] > errs[1] > errs[2]

    def test_2d_requires_square_count(self):
        with pytest.raises(ValueError):
            ObservationSet(2, 5)

    def test_representers_match_weight_quadrature(self, fld1):
        """Representer dot products equal cellwise quadrature of w_i * P."""
        lvl = fem_level(1, 5)
        obs = ObservationSet(1, 4)
        sol = solve(lvl, fld1, np.array([0.4, -0.2, 0.1, 0.3]), tol=1e-12)
        got = observe(sol, obs)
        x, w = np.polynomial.legendre.leggauss(12)
        grid = np.concatenate([[0.0], lvl.nodes, [1.0]])
        vals = np.concatenate([[0.0], sol.coeffs, [0.0]])
        direct = np.zeros(obs.k)
        for e in range(lvl.n_cells):
            a = e * lvl.h
            xs = a + 0.5 * lvl.h * (x + 1.0)
            p_vals = np.interp(xs, grid, vals)
            direct += obs.weight_values(xs) @ (0.5 * lvl.h * w * p_vals)
        np.testing.assert_allclose(got, direct, atol=1e-6)


class TestProlongAndErrors:
    def test_prolongation_is_linear_interpolation(self):
        lvl = fem_level(1, 3)
        vals = lvl.nodes * (1.0 - lvl.nodes)
        fine = prolong_vec(1, vals, 3, 5)
        xf = fem_level(1, 5).nodes
        expected = np.interp(xf, np.concatenate([[0.0], lvl.nodes, [1.0]]),
                             np.concatenate([[0.0], vals, [0.0]]))
        np.testing.assert_allclose(fine, expected, atol=1e-13)

    def test_prolong_rejects_downward(self):
        with pytest.raises(ValueError):
            prolong_vec(1, np.zeros(7), 2, 1)

    def test_identical_solutions_have_zero_error(self, fld1):
        sol = solve(fem_level(1, 3), fld1, np.array([0.2, 0.1, 0.0, 0.0]))
        assert h1_seminorm_error(sol, sol) == 0.0

    def test_manufactured_rate_1d(self, fld1):
        """H1 error against pi^2 sin(pi x) forcing halves per level."""
        def f(x):
            return np.pi ** 2 * np.sin(np.pi * x)

        def grad(x):
            return np.pi * np.cos(np.pi * x)

        errs = []
        for lv in (2, 3, 4, 5):
            sol = solve(fem_level(1, lv), fld1, np.zeros(4), f=f, tol=1e-12)
            errs.append(h1_error_vs_gradient(sol, grad))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(np.abs(ratios - 2.0) < 0.2)


class TestWorkTally:
    def test_accumulates(self):
        t = WorkTally()
        t.add(10.0, 100.0)
        t.add(5.0, 50.0, n=2)
        assert t.n_solves == 3
        assert t.ndof == 15.0
        assert t.flops == 150.0

    def test_merge(self):
        a, b = WorkTally(), WorkTally()
        a.add(1.0, 2.0)
        b.add(3.0, 4.0)
        a.merge(b)
        assert (a.n_solves, a.ndof, a.flops) == (2, 4.0, 6.0)
