"""Monte Carlo engine tests: deterministic order-independent sampling,
truncation, fin-count sigma scaling, statistics, and failure accounting."""

import numpy as np
import pytest

from ptmsa import (McConfig, apply_draw, run_mc, sample_parameters, summarize)
from ptmsa.errors import AllSamplesFailed
from ptmsa.montecarlo import FAMILIES, McSample, config_for
from ptmsa.topologies import TopologyParams


def cfg(**kw):
    base = dict(n_samples=100, master_seed=42,
                device_fins=(("mp1", 6), ("mp2", 6)))
    base.update(kw)
    return McConfig(**base)


class TestSampling:
    def test_sigma_arithmetic(self):
        c = cfg()
        assert c.v_c_imt_rel_sigma * c.v_c_imt_mean == pytest.approx(0.01008)

    def test_same_seed_and_index_identical(self):
        c = cfg()
        a = sample_parameters(c, 7)
        b = sample_parameters(c, 7)
        assert a == b

    def test_independent_of_evaluation_order(self):
        c = cfg()
        forward = [sample_parameters(c, i) for i in range(10)]
        backward = [sample_parameters(c, i) for i in reversed(range(10))]
        assert forward == list(reversed(backward))

    def test_distinct_indices_differ(self):
        c = cfg()
        assert sample_parameters(c, 0) != sample_parameters(c, 1)

    def test_all_draws_within_three_sigma(self):
        c = cfg(n_samples=1000)
        s_imt = 0.03 * 0.336
        s_vth = 0.035 * 0.2 / np.sqrt(6)
        for i in range(1000):
            d = sample_parameters(c, i)
            assert abs(d.v_c_imt - 0.336) <= 3 * s_imt
            assert abs(d.l_factor - 1.0) <= 3 * 0.03
            for _, v in d.v_th:
                assert abs(v - 0.2) <= 3 * s_vth

    def test_sample_mean_within_standard_error_bound(self):
        """n = 5000 draws: |mean - mu| <= 4 sigma / sqrt(n) per family."""
        n = 5000
        c = cfg(n_samples=n)
        draws = [sample_parameters(c, i) for i in range(n)]
        v_imt = np.array([d.v_c_imt for d in draws])
        sigma = 0.03 * 0.336
        assert abs(v_imt.mean() - 0.336) <= 4 * sigma / np.sqrt(n)
        l_fac = np.array([d.l_factor for d in draws])
        assert abs(l_fac.mean() - 1.0) <= 4 * 0.03 / np.sqrt(n)
        vth = np.array([dict(d.v_th)["mp2"] for d in draws])
        sigma_th = 0.035 * 0.2 / np.sqrt(6)
        assert abs(vth.mean() - 0.2) <= 4 * sigma_th / np.sqrt(n)

    def test_fin_count_scales_sigma_inverse_sqrt(self):
        """A four-fin device draws with half the base sigma."""
        n = 4000
        c = cfg(n_samples=n, device_fins=(("a", 1), ("b", 4)))
        draws = [sample_parameters(c, i) for i in range(n)]
        std_a = np.std([dict(d.v_th)["a"] for d in draws])
        std_b = np.std([dict(d.v_th)["b"] for d in draws])
        assert std_a / std_b == pytest.approx(2.0, rel=0.1)

    def test_one_at_a_time_mode(self):
        c = cfg(vary=("v_th",))
        d = sample_parameters(c, 3)
        assert d.v_c_imt is None
        assert d.l_factor is None
        assert len(d.v_th) == 2

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            cfg(vary=("bogus",))

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            sample_parameters(cfg(n_samples=5), 5)


class TestApplyDraw:
    def test_draw_moves_parameters(self):
        params = TopologyParams.defaults("hp-csa")
        c = config_for("hp-csa", params, McConfig(n_samples=2, master_seed=1))
        assert set(dict(c.device_fins)) == {"mp1", "mp2"}
        d = sample_parameters(c, 0)
        p = apply_draw(params, d)
        assert p.ptm.v_c_imt == pytest.approx(d.v_c_imt)
        assert p.ptm.r_ins / params.ptm.r_ins == pytest.approx(d.l_factor)
        assert p.ptm.r_met / params.ptm.r_met == pytest.approx(d.l_factor)
        for name, v in d.v_th:
            assert p.device_dvth[name] == pytest.approx(v - 0.2)

    def test_conventional_varies_all_transistors(self):
        params = TopologyParams.defaults("conv-csa")
        c = config_for("conv-csa", params,
                       McConfig(n_samples=1, master_seed=0))
        assert len(c.device_fins) == 10


class TestRunMC:
    def test_degenerate_distribution_matches_nominal(self):
        from ptmsa import run_sense
        samples = run_mc("hp-csa", McConfig(n_samples=1, master_seed=9,
                                            vary=()))
        assert len(samples) == 1 and samples[0].ok
        _, nominal = run_sense("hp-csa", "lrs")
        assert samples[0].metrics.delay == nominal.delay
        assert samples[0].metrics.sensing_power == nominal.sensing_power

    def test_small_batch_no_failures_and_deterministic(self):
        a = run_mc("hp-csa", McConfig(n_samples=5, master_seed=3))
        b = run_mc("hp-csa", McConfig(n_samples=5, master_seed=3))
        assert all(s.ok for s in a)
        for s, t in zip(a, b):
            assert s.draw == t.draw
            assert s.metrics.delay == t.metrics.delay
            assert s.metrics.pdp == t.metrics.pdp

    def test_worker_count_does_not_change_results(self):
        serial = run_mc("hp-vsa", McConfig(n_samples=4, master_seed=5))
        parallel = run_mc("hp-vsa", McConfig(n_samples=4, master_seed=5,
                                             workers=2))
        for s, p in zip(serial, parallel):
            assert s.index == p.index
            assert s.draw == p.draw
            assert s.metrics.delay == p.metrics.delay
            assert s.metrics.sensing_power == p.metrics.sensing_power

    def test_failed_samples_recorded_not_dropped(self):
        """A stimulus too weak to trigger the transition makes the LRS read
        fail; the sample must carry an error tag."""
        params = TopologyParams.defaults("hp-csa")
        import dataclasses
        params = dataclasses.replace(params, i_lrs=30e-6, i_hrs=15e-6)
        samples = run_mc("hp-csa", McConfig(n_samples=3, master_seed=1),
                         params)
        assert len(samples) == 3
        assert all(not s.ok for s in samples)
        assert all(s.error for s in samples)


class TestSummarize:
    def _sample(self, idx, delay, power):
        from ptmsa.analysis import SenseMetrics
        m = SenseMetrics(delay, power, delay * power, "low", [])
        return McSample(idx, None, m, "high", None)

    def test_single_sample(self):
        s = summarize([self._sample(0, 10e-12, 50e-6)])
        st = s.metrics["delay_s"]
        assert st.mean == 10e-12
        assert st.std == 0.0
        assert st.worst == 10e-12
        assert sum(st.counts) == 1

    def test_two_samples_mean_and_worst(self):
        s = summarize([self._sample(0, 10e-12, 50e-6),
                       self._sample(1, 20e-12, 50e-6)])
        st = s.metrics["delay_s"]
        assert st.mean == pytest.approx(15e-12)
        assert st.worst == pytest.approx(20e-12)
        assert s.metrics["pdp_ws"].worst == pytest.approx(20e-12 * 50e-6)

    def test_worst_at_least_mean_and_counts_sum(self):
        rng = np.random.default_rng(0)
        samples = [self._sample(i, float(d), 50e-6)
                   for i, d in enumerate(rng.uniform(5e-12, 30e-12, 50))]
        s = summarize(samples)
        for st in s.metrics.values():
            assert st.worst >= st.mean
            assert sum(st.counts) == 50

    def test_failures_counted(self):
        good = self._sample(0, 10e-12, 50e-6)
        bad = McSample(1, None, None, None, error="boom")
        s = summarize([good, bad])
        assert s.n_failed == 1
        assert s.n_ok == 1

    def test_all_failed_raises(self):
        bad = McSample(0, None, None, None, error="boom")
        with pytest.raises(AllSamplesFailed):
            summarize([bad])
