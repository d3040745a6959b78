"""Quadrature posteriors and dense solves used as ground truth elsewhere."""

import numpy as np
import pytest

from invert.errors import InfeasibleError
from invert.fem import WorkTally, fem_level, solve
from invert.field import builtin_field
from invert.oracle import (
    MAX_DENSE_DOF,
    MAX_GRID_DIM,
    MAX_GRID_ORDER,
    QuadratureGrid,
    dense_reference_solve,
    posterior_expectation_quadrature,
)


class TestQuadratureGrid:
    def test_weights_normalized(self):
        for dim in (1, 2, 3):
            grid = QuadratureGrid.build(dim, 8)
            assert grid.weights.sum() == pytest.approx(1.0, rel=1e-13)
            assert grid.nodes.shape == (8 ** dim, dim)

    def test_prior_moments(self):
        """Exact uniform-prior moments on [-1,1]^2: u^2, u^4, and cross terms."""
        grid = QuadratureGrid.build(2, 6)
        m2 = grid.weights @ grid.nodes[:, 0] ** 2
        m4 = grid.weights @ grid.nodes[:, 0] ** 4
        mixed = grid.weights @ (grid.nodes[:, 0] * grid.nodes[:, 1])
        assert m2 == pytest.approx(1.0 / 3.0, rel=1e-13)
        assert m4 == pytest.approx(1.0 / 5.0, rel=1e-13)
        assert abs(mixed) < 1e-15

    def test_caps_refused(self):
        with pytest.raises(InfeasibleError):
            QuadratureGrid.build(MAX_GRID_DIM + 1, 8)
        with pytest.raises(InfeasibleError):
            QuadratureGrid.build(2, MAX_GRID_ORDER + 1)


class TestPosteriorExpectation:
    def test_constant_observable(self, spec24):
        e, z = posterior_expectation_quadrature(
            spec24, g=lambda rows: np.ones(len(rows)), order=8)
        assert e == pytest.approx(1.0, rel=1e-14)
        assert 0.0 < z <= 1.0

    def test_order_self_convergence(self, spec24):
        e16, _ = posterior_expectation_quadrature(spec24, order=16)
        e24, _ = posterior_expectation_quadrature(spec24, order=24)
        assert abs(e16 - e24) < 1e-8
        assert 0.08 < e16 < 0.09

    def test_flat_posterior_is_symmetric(self, canonical):
        """Enormous noise flattens the likelihood; odd moments vanish."""
        from invert.bayes import NoiseModel, PosteriorFamily

        base = canonical.family
        fam = PosteriorFamily(base.field, base.dim, base.obs,
                              NoiseModel.iso(1e8, base.obs.k), base.data)
        spec = fam.spec(2, 3)
        e, z = posterior_expectation_quadrature(
            spec, g=lambda rows: rows[:, 0], order=12)
        assert abs(e) < 1e-10
        assert z == pytest.approx(1.0, abs=1e-10)

    def test_grid_dim_mismatch(self, spec24):
        grid = QuadratureGrid.build(3, 6)
        with pytest.raises(InfeasibleError):
            posterior_expectation_quadrature(spec24, grid=grid)

    def test_tally_counts_solves(self, spec24):
        tally = WorkTally()
        posterior_expectation_quadrature(spec24, order=6, tally=tally)
        assert tally.n_solves == 36
        assert tally.flops > 0


class TestDenseReference:
    def test_matches_iterative_solve(self):
        fld = builtin_field(1, 2.0, 1.0, 4)
        lvl = fem_level(1, 4)
        u = np.array([0.4, -0.3])
        dense = dense_reference_solve(lvl, fld, u)
        cg = solve(lvl, fld, u, tol=1e-13)
        np.testing.assert_allclose(cg.coeffs, dense, atol=1e-10)

    def test_dof_cap(self):
        fld = builtin_field(1, 2.0, 1.0, 2)
        lvl = fem_level(1, 12)
        assert lvl.ndof > MAX_DENSE_DOF
        with pytest.raises(InfeasibleError):
            dense_reference_solve(lvl, fld, np.zeros(2))
