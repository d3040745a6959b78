"""Independence sampler: acceptance mechanics, streams, and error bars."""

import numpy as np
import pytest

from invert.sampler import PHI_CLAMP, batch_means_se, run_estimate


class TestBatchMeansSe:
    def test_iid_scale(self):
        """On iid draws the batch-means SE tracks sigma / sqrt(n)."""
        rng = np.random.default_rng(0)
        x = rng.standard_normal(10000)
        se = batch_means_se(x)
        assert 0.7e-2 <= se <= 1.3e-2

    def test_constant_series(self):
        assert batch_means_se(np.full(100, 2.5)) == 0.0

    def test_short_series_falls_back(self):
        x = np.array([1.0, 2.0, 3.0])
        assert batch_means_se(x) > 0.0


class TestRunEstimate:
    def test_deterministic_given_seed(self, spec24):
        a = run_estimate(spec24, 400, (0, 9, 0))
        b = run_estimate(spec24, 400, (0, 9, 0))
        assert a.estimate == b.estimate
        assert a.accept_rate == b.accept_rate

    def test_streams_disjoint(self, spec24):
        a = run_estimate(spec24, 400, (0, 9, 0))
        b = run_estimate(spec24, 400, (0, 9, 1))
        assert a.estimate != b.estimate

    def test_int_seed_accepted(self, spec24):
        a = run_estimate(spec24, 100, 12345)
        b = run_estimate(spec24, 100, (12345,))
        assert a.estimate == b.estimate

    def test_rejects_all_burned(self, spec24):
        with pytest.raises(ValueError):
            run_estimate(spec24, 10, (0,), burn_in=10)

    def test_burn_in_trims_average(self, spec24):
        full = run_estimate(spec24, 300, (0, 9, 2), return_trace=True)
        trimmed = run_estimate(spec24, 300, (0, 9, 2), burn_in=100)
        vals = full.trace["values"][full.trace["idx"] + 1]
        assert trimmed.estimate == pytest.approx(vals[100:].mean(), rel=1e-12)

    def test_acceptance_rule_reconstruction(self, spec24):
        """Replaying the trace reproduces the accept/reject decisions."""
        res = run_estimate(spec24, 2000, (0, 9, 3), return_trace=True)
        tr = res.trace
        phi = tr["phi"]
        idx = tr["idx"]
        u = tr["accept_u"]
        cur = -1
        n_acc = 0
        for k in range(2000):
            phic = phi[0] if cur < 0 else phi[cur + 1]
            alpha = min(1.0, np.exp(np.clip(phic - phi[k + 1],
                                            -PHI_CLAMP, PHI_CLAMP)))
            if u[k] <= alpha:
                cur = k
                n_acc += 1
            assert idx[k] == cur
        assert res.accept_rate == pytest.approx(n_acc / 2000)

    def test_custom_observable(self, spec24):
        """g sees the visited rows; a first-coordinate average stays small."""
        res = run_estimate(spec24, 4000, (0, 9, 4), g=lambda rows: rows[:, 0])
        assert abs(res.estimate) < 1.0

    def test_work_accounting(self, spec24):
        res = run_estimate(spec24, 250, (0, 9, 5))
        assert res.work.n_solves == 251
        assert res.work.flops > 0
        assert res.work.ndof == 251 * 31

    def test_estimate_matches_trace_mean(self, spec24):
        res = run_estimate(spec24, 500, (0, 9, 6), return_trace=True)
        vals = res.trace["values"][res.trace["idx"] + 1]
        assert res.estimate == pytest.approx(vals.mean(), rel=1e-14)

    def test_clamp_constant(self):
        assert PHI_CLAMP == 50.0
