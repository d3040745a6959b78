"""Noise model, potential, data synthesis, and Hellinger diagnostics."""

import numpy as np
import pytest

from invert.bayes import (
    NoiseModel,
    PosteriorFamily,
    hellinger_quadrature,
    synthesize_data,
)
from invert.fem import ObservationSet
from invert.field import builtin_field


@pytest.fixture(scope="module")
def small_family():
    fld = builtin_field(1, 2.0, 1.0, 2)
    obs = ObservationSet(1, 4)
    noise = NoiseModel.iso(0.1, 4)
    u_true = np.array([0.35, -0.175])
    data = synthesize_data(fld, 1, obs, u_true, noise, seed=101, ref_level=6)
    return PosteriorFamily(fld, 1, obs, noise, data)


class TestNoiseModel:
    def test_iso_whiten_scales(self):
        nm = NoiseModel.iso(0.5, 3)
        v = np.array([[1.0, -2.0, 0.5]])
        np.testing.assert_allclose(nm.whiten(v), v / 0.5)

    def test_weighted_norm_example(self):
        """Residual 0.6 at unit noise contributes potential 0.18."""
        nm = NoiseModel.iso(1.0, 1)
        r = np.array([0.6])
        assert 0.5 * nm.weighted_norm(r) ** 2 == pytest.approx(0.18)

    def test_full_covariance_whitening(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((3, 3))
        cov = a @ a.T + 3.0 * np.eye(3)
        nm = NoiseModel.full(cov)
        v = rng.standard_normal(3)
        got = np.sum(nm.whiten(v[None, :]) ** 2)
        want = v @ np.linalg.solve(cov, v)
        np.testing.assert_allclose(got, want, rtol=1e-10)

    def test_zero_noise_cannot_whiten(self):
        nm = NoiseModel.iso(0.0, 2)
        with pytest.raises(ValueError):
            nm.whiten(np.zeros((1, 2)))

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel.iso(-0.1, 2)


class TestPotential:
    def test_zero_at_matching_data(self):
        """Data generated by the forward map itself has zero potential."""
        fld = builtin_field(1, 2.0, 1.0, 2)
        obs = ObservationSet(1, 4)
        noise = NoiseModel.iso(0.1, 4)
        u = np.array([0.3, -0.2])
        tmp = PosteriorFamily(fld, 1, obs, noise, np.zeros(4))
        op_obs = tmp.operator(2, 4).forward(u).obs
        fam = PosteriorFamily(fld, 1, obs, noise, op_obs)
        phi, _ = fam.spec(2, 4).potential_eval(u)
        assert phi == 0.0

    def test_shift_formula(self):
        """A uniform observation shift d gives potential k d^2 / (2 sigma^2)."""
        fld = builtin_field(1, 2.0, 1.0, 2)
        obs = ObservationSet(1, 4)
        noise = NoiseModel.iso(0.1, 4)
        u = np.array([0.3, -0.2])
        base = PosteriorFamily(fld, 1, obs, noise, np.zeros(4))
        op_obs = base.operator(2, 4).forward(u).obs
        fam = PosteriorFamily(fld, 1, obs, noise, op_obs + 0.1)
        phi, _ = fam.spec(2, 4).potential_eval(u)
        assert phi == pytest.approx(4 * 0.5 * (0.1 / 0.1) ** 2, rel=1e-9)

    def test_nonnegative_and_uniformly_bounded(self, small_family):
        """Potential is nonnegative and below the a-priori uniform bound."""
        spec = small_family.spec(2, 3)
        rng = np.random.default_rng(17)
        rows = rng.uniform(-1.0, 1.0, size=(1000, 2))
        phi, _, _ = spec.potential_batch(rows)
        assert np.all(phi >= 0.0)
        vals, _ = spec.op.forward_batch(rows)
        g_norm = np.linalg.norm(vals[:, :4] @ spec.noise.inv_sqrt.T, axis=1)
        d_norm = spec.noise.weighted_norm(spec.data[None, :])
        bound = 0.5 * (d_norm + g_norm.max()) ** 2
        assert phi.max() <= bound + 1e-12


class TestSynthesizeData:
    def test_zero_noise_matches_forward(self):
        fld = builtin_field(1, 2.0, 1.0, 2)
        obs = ObservationSet(1, 4)
        u_true = np.array([0.35, -0.175])
        data = synthesize_data(fld, 1, obs, u_true, NoiseModel.iso(0.0, 4),
                               seed=7, ref_level=6)
        fam = PosteriorFamily(fld, 1, obs, NoiseModel.iso(0.1, 4), data)
        ref = fam.operator(2, 6)
        np.testing.assert_allclose(data, ref.forward(u_true).obs, atol=1e-12)

    def test_seed_reproducibility(self):
        fld = builtin_field(1, 2.0, 1.0, 2)
        obs = ObservationSet(1, 4)
        u_true = np.array([0.35, -0.175])
        nm = NoiseModel.iso(0.05, 4)
        a = synthesize_data(fld, 1, obs, u_true, nm, seed=11, ref_level=6)
        b = synthesize_data(fld, 1, obs, u_true, nm, seed=11, ref_level=6)
        c = synthesize_data(fld, 1, obs, u_true, nm, seed=12, ref_level=6)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_noise_magnitude(self):
        """One-mode data sits within 4 sigma of the noise-free values."""
        fld = builtin_field(1, 2.0, 1.0, 1)
        obs = ObservationSet(1, 4)
        u_true = np.array([0.5])
        clean = synthesize_data(fld, 1, obs, u_true, NoiseModel.iso(0.0, 4),
                                seed=3, ref_level=6)
        noisy = synthesize_data(fld, 1, obs, u_true, NoiseModel.iso(0.05, 4),
                                seed=3, ref_level=6)
        assert np.all(np.abs(noisy - clean) <= 4 * 0.05)


class TestHellinger:
    def test_identical_specs_have_zero_distance(self, small_family):
        spec = small_family.spec(2, 3)
        assert hellinger_quadrature(spec, spec, order=12) == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self, small_family):
        a = small_family.spec(2, 2)
        b = small_family.spec(2, 4)
        d1 = hellinger_quadrature(a, b, order=12)
        d2 = hellinger_quadrature(b, a, order=12)
        assert d1 == pytest.approx(d2, rel=1e-12)

    def test_range_and_level_monotonicity(self, small_family):
        """Distance to a fine reference shrinks as the level rises."""
        ref = small_family.spec(2, 6)
        d2 = hellinger_quadrature(small_family.spec(2, 2), ref, order=12)
        d3 = hellinger_quadrature(small_family.spec(2, 3), ref, order=12)
        d4 = hellinger_quadrature(small_family.spec(2, 4), ref, order=12)
        for d in (d2, d3, d4):
            assert 0.0 <= d <= 1.0
        assert d2 > d3 > d4
