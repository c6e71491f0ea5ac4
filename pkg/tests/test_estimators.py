import math

import numpy as np
import pytest

from pridec.errors import AbsoluteContinuityError, RangeError
from pridec.estimators import (
    EstRecord,
    OnlineMirrorDescent,
    VovkAggregator,
    omd_bound,
    omd_step,
    record_est,
    vovk_bound,
    vovk_step,
)
from pridec.models import canonical_mab, mab_class, regression_class
from pridec.prob import FiniteDist, FiniteSpace, ScalarFn
from pridec.rng import stream


class TestVovk:
    def test_single_model_prediction_fixed(self):
        cls = mab_class([[0.4, -0.2]])
        agg = VovkAggregator(cls, alpha=1.0)
        for t in range(10):
            agg.update(0, 0, +1 if t % 2 else -1)
            assert np.allclose(agg.weights, [1.0])

    def test_identical_responses_keep_weights_equal(self):
        cls = mab_class([[0.5, -0.5], [0.5, 0.9]])  # same distribution at arm 0
        agg = VovkAggregator(cls, alpha=1.0)
        for o in (+1, -1, +1):
            agg.update(0, 0, o)
        assert agg.weights[0] == pytest.approx(agg.weights[1])

    def test_weights_remain_distribution(self):
        cls = canonical_mab(3)
        agg = VovkAggregator(cls, alpha=0.5)
        rng = stream(0, "t")
        for t in range(200):
            agg.update(int(rng.integers(3)), int(rng.integers(2)), int(rng.choice([-1, 1])))
            assert agg.weights.min() >= 0
            assert agg.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_step_wrapper(self):
        cls = canonical_mab(2)
        agg = VovkAggregator(cls, alpha=1.0)
        _, w = vovk_step(agg, 0, 0, +1)
        assert w.sum() == pytest.approx(1.0)

    def test_converges_to_truth_on_separated_instance(self):
        cls = canonical_mab(3)
        agg = VovkAggregator(cls, alpha=1.0)
        rng = stream(5, "conv")
        c = 1 - math.exp(-1.0)
        truth = 1
        for t in range(300):
            pi = int(rng.integers(3))
            li = int(rng.integers(len(cls.dictionary)))
            mean = c * agg.means[truth, pi, li]
            o = +1 if rng.random() < (1 + mean) / 2 else -1
            agg.update(pi, li, o)
        assert agg.weights[truth] > 0.95


class TestOmd:
    @staticmethod
    def setup_state(n=4, alpha=1.0, n_rounds=100):
        space = FiniteSpace(tuple(range(n)))
        ref = FiniteDist(space, np.full(n, 1.0 / n))
        return OnlineMirrorDescent(ref, c_kl=1.0, n_rounds=n_rounds, alpha=alpha), space

    def test_first_prediction_is_reference(self):
        state, _ = self.setup_state()
        assert np.allclose(state.predict().mass, 0.25)

    def test_constant_functional_no_update(self):
        state, space = self.setup_state()
        before = state.predict().mass.copy()
        omd_step(state, ScalarFn(space, [0.3] * 4), +1)
        assert np.allclose(state.predict().mass, before)

    def test_support_matches_reference(self):
        space = FiniteSpace(tuple(range(4)))
        ref = FiniteDist(space, [0.5, 0.5, 0.0, 0.0])
        state = OnlineMirrorDescent(ref, 1.0, 50, 1.0)
        rng = stream(1, "omd")
        for _ in range(50):
            fn = ScalarFn(space, rng.uniform(size=4))
            omd_step(state, fn, int(rng.choice([-1, 1])))
            pred = state.predict()
            assert np.all(pred.mass[2:] == 0.0)
            assert np.all(pred.mass[:2] > 0.0)

    def test_support_violation_rejected(self):
        space = FiniteSpace(tuple(range(2)))
        cls = regression_class([[1.0]], [[1.0]])  # point mass model
        ref = FiniteDist(cls.obs_space, [1.0, 0.0])
        with pytest.raises(AbsoluteContinuityError):
            OnlineMirrorDescent(ref, 1.0, 10, 1.0, cls)

    def test_bad_observation(self):
        state, space = self.setup_state()
        with pytest.raises(RangeError):
            state.update(ScalarFn(space, [0.1] * 4), 2)


class TestEstRecord:
    def test_exact_prediction_appends_zero(self):
        rec = EstRecord(bound=1.0)
        truth = np.array([[0.5, 0.2]])
        record_est(rec, truth, np.array([[0.7, 0.3]]), truth)
        assert rec.per_step == [0.0]

    def test_point_mass_q(self):
        rec = EstRecord(bound=1.0)
        truth = np.array([[0.5, 0.2]])
        pred = np.array([[0.1, 0.2]])
        record_est(rec, truth, np.array([[1.0, 0.0]]), pred)
        assert rec.per_step[-1] == pytest.approx(0.16)

    def test_cumulative_monotone(self):
        rec = EstRecord(bound=10.0)
        rng = np.random.default_rng(0)
        prev = 0.0
        for _ in range(20):
            record_est(
                rec,
                rng.uniform(size=(2, 2)),
                rng.dirichlet(np.ones(4)).reshape(2, 2),
                rng.uniform(size=(2, 2)),
            )
            assert rec.cumulative >= prev - 1e-15
            prev = rec.cumulative


class TestConfiguredBounds:
    def test_vovk_bound_formula(self):
        assert vovk_bound(3, 0.1, 1.0) == pytest.approx(20 * math.log(30))

    def test_omd_bound_formula(self):
        expect = 20 * (math.sqrt(2.0 * 64) / 0.5 + math.log(10) / 0.25)
        assert omd_bound(2.0, 64, 0.1, 0.5) == pytest.approx(expect)
