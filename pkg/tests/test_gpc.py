"""Chaos surrogate: basis, candidate sets, projection, and serialization."""

import numpy as np
import pytest

from invert.errors import InfeasibleError
from invert.fem import ForwardOperator
from invert.field import builtin_field
from invert.gpc import (
    ClampedQoi,
    build_surrogate,
    candidate_indices,
    index_weights,
    legendre_eval,
    load_surrogate,
    save_surrogate,
    select_top,
    surrogate_l2_error,
    tensor_legendre,
)


@pytest.fixture(scope="module")
def sur(canonical):
    fam = canonical.family
    return build_surrogate(fam.field, fam.dim, fam.obs, 2, 4, 8.0,
                           quad_order=12)


class TestLegendreBasis:
    def test_orthonormal(self):
        x, w = np.polynomial.legendre.leggauss(32)
        vals = legendre_eval(8, x)
        gram = (vals * w) @ vals.T / 2.0
        np.testing.assert_allclose(gram, np.eye(9), atol=1e-12)

    def test_low_degrees_explicit(self):
        t = np.linspace(-1.0, 1.0, 9)
        vals = legendre_eval(2, t)
        np.testing.assert_allclose(vals[0], np.ones_like(t), atol=1e-14)
        np.testing.assert_allclose(vals[1], np.sqrt(3.0) * t, atol=1e-14)
        np.testing.assert_allclose(vals[2],
                                   np.sqrt(5.0) * (3 * t * t - 1) / 2,
                                   atol=1e-13)

    def test_domain_guard(self):
        with pytest.raises(ValueError):
            legendre_eval(3, np.array([0.0, 1.5]))

    def test_tensor_product(self):
        u = np.array([0.3, -0.5])
        want = (np.sqrt(5.0) * (3 * 0.09 - 1) / 2) * (np.sqrt(3.0) * -0.5)
        assert tensor_legendre([2, 1], u) == pytest.approx(want, rel=1e-13)
        with pytest.raises(ValueError):
            tensor_legendre([1, 2, 3], u)


class TestCandidateIndices:
    def test_weights_grow_logarithmically(self):
        w = index_weights(3)
        np.testing.assert_allclose(w, 1.0 + np.log2([2.0, 3.0, 4.0]))

    def test_one_dim_enumeration(self):
        cand = candidate_indices(1, 3.0)
        np.testing.assert_array_equal(cand, [[0], [1]])

    def test_constraint_and_ordering(self):
        cand = candidate_indices(2, 8.0)
        assert len(cand) == 11
        w = index_weights(2)
        assert np.all(cand @ w <= 8.0 + 1e-9)
        as_tuples = [tuple(r) for r in cand]
        assert as_tuples == sorted(as_tuples)
        assert (0, 0) in as_tuples

    def test_dim_cap(self):
        with pytest.raises(InfeasibleError):
            candidate_indices(17, 2.0)


class TestBuildSurrogate:
    def test_shapes_and_ordering(self, sur):
        assert sur.n_terms == 11
        assert sur.coeffs.shape == (11, 5)
        assert sur.degrees.shape == (11, 2)
        norms = sur.row_norms()
        assert np.all(np.diff(norms) <= 1e-15)
        assert np.any(~sur.degrees.any(axis=1))

    def test_pointwise_accuracy(self, sur, canonical):
        fam = canonical.family
        op = ForwardOperator(fam.field, fam.dim, 4, 2, fam.obs)
        rng = np.random.default_rng(21)
        for u in rng.uniform(-1.0, 1.0, size=(5, 2)):
            a = sur.forward(u)
            b = op.forward(u)
            np.testing.assert_allclose(a.obs, b.obs, atol=1e-3)
            assert abs(a.qoi - b.qoi) < 1e-3

    def test_eval_costs(self, sur):
        assert sur.ndof == 0
        assert sur.eval_flops == 11 * (2 + 4 + 2)
        ev = sur.forward(np.array([0.1, 0.2]))
        assert ev.iters == 0
        assert ev.ndof == 0
        assert ev.obs.shape == (4,)

    def test_batch_shape_guard(self, sur):
        vals = sur.eval_batch(np.zeros((3, 2)))
        assert vals.shape == (3, 5)
        with pytest.raises(ValueError):
            sur.eval_batch(np.zeros((3, 4)))

    def test_node_cap(self, canonical):
        fam = canonical.family
        fld = builtin_field(1, 2.0, 1.0, 4)
        with pytest.raises(InfeasibleError):
            build_surrogate(fld, 1, fam.obs, 4, 3, 4.0, quad_order=24)


class TestSelectTop:
    def test_truncation_energy(self, sur):
        top = select_top(sur, 4)
        assert top.n_terms == 4
        assert top.total_energy == sur.total_energy
        assert top.tail_energy > sur.tail_energy
        assert np.any(~top.degrees.any(axis=1))

    def test_l2_error_grows_under_truncation(self, sur, canonical):
        fam = canonical.family
        full = surrogate_l2_error(sur, fam.field, fam.dim, fam.obs, order=12)
        cut = surrogate_l2_error(select_top(sur, 2), fam.field, fam.dim,
                                 fam.obs, order=12)
        assert cut > full

    def test_bounds(self, sur):
        with pytest.raises(ValueError):
            select_top(sur, 0)
        with pytest.raises(ValueError):
            select_top(sur, sur.n_terms + 1)


class TestClampedQoi:
    def test_counts_and_clips(self, sur):
        qoi = ClampedQoi(sur, 1e-4)
        out = qoi(np.array([[0.0, 0.0], [0.5, -0.5]]))
        assert np.all(np.abs(out) <= 1e-4)
        assert qoi.n_clamped == 2
        loose = ClampedQoi(sur, 10.0)
        loose(np.array([[0.0, 0.0]]))
        assert loose.n_clamped == 0

    def test_rejects_bad_bound(self, sur):
        with pytest.raises(ValueError):
            ClampedQoi(sur, 0.0)


class TestSurrogateAsForwardMap:
    def test_potential_matches_direct_formula(self, sur, canonical):
        from invert.bayes import PosteriorSpec

        fam = canonical.family
        spec = PosteriorSpec(field=fam.field, obs=fam.obs, noise=fam.noise,
                             data=fam.data, op=sur)
        assert spec.n_active == 2
        assert spec.level == 4
        u = np.array([0.25, -0.5])
        phi, _ = spec.potential_eval(u)
        want = 0.5 * fam.noise.weighted_norm(fam.data - sur.forward(u).obs) ** 2
        assert phi == pytest.approx(want, rel=1e-12)


class TestSerialization:
    def test_roundtrip_bit_exact(self, sur, tmp_path):
        path = tmp_path / "sur.txt"
        save_surrogate(sur, path)
        back = load_surrogate(path)
        np.testing.assert_array_equal(back.degrees, sur.degrees)
        assert np.array_equal(back.coeffs, sur.coeffs)
        assert back.total_energy == sur.total_energy
        assert back.tail_energy == sur.tail_energy
        assert back.quad_orders == sur.quad_orders
        assert back.cap == sur.cap

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.txt"
        path.write_text("something else\n")
        with pytest.raises(ValueError):
            load_surrogate(path)
