import math

import numpy as np
import pytest

from basinflow.errors import UndefinedMetricError
from basinflow.metrics import PairedSeries, bias, cc, compute_all, kge, nse, rmse


def paired(obs, sim):
    obs = np.asarray(obs, dtype=np.float64)
    return PairedSeries(timestamps=list(range(obs.size)), q_obs=obs, q_sim=sim)


class TestNse:
    def test_perfect(self):
        assert nse(paired([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])) == 1.0

    def test_mean_predictor_is_zero(self):
        obs = [1.0, 2.0, 3.0, 6.0]
        mean = sum(obs) / len(obs)
        assert nse(paired(obs, [mean] * 4)) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_triple(self):
        assert nse(paired([1.0, 2.0, 3.0], [1.0, 1.0, 3.0])) == pytest.approx(0.5)

    def test_constant_obs_undefined(self):
        with pytest.raises(UndefinedMetricError):
            nse(paired([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]))


class TestBias:
    def test_mean_error(self):
        mean_err, percent = bias(paired([1.0, 2.0, 3.0], [2.0, 3.0, 4.0]))
        assert mean_err == pytest.approx(1.0)
        assert percent == pytest.approx(50.0)

    def test_perfect(self):
        mean_err, percent = bias(paired([1.0, 2.0], [1.0, 2.0]))
        assert mean_err == 0.0
        assert percent == 0.0

    def test_zero_volume_undefined(self):
        with pytest.raises(UndefinedMetricError):
            bias(paired([0.0, 0.0], [1.0, 1.0]))


class TestRmse:
    def test_perfect(self):
        assert rmse(paired([1.0, 2.0], [1.0, 2.0])) == 0.0

    def test_hand_computed(self):
        assert rmse(paired([1.0, 2.0, 3.0], [1.0, 1.0, 3.0])) == pytest.approx(
            math.sqrt(1.0 / 3.0))

    def test_constant_offset(self, rng):
        obs = rng.uniform(1.0, 10.0, size=50)
        for c in (0.5, -2.0):
            assert rmse(paired(obs, obs + c)) == pytest.approx(abs(c))

    def test_decomposition(self, rng):
        obs = rng.uniform(1.0, 10.0, size=200)
        sim = obs + rng.normal(0.0, 1.0, size=200)
        p = paired(obs, sim)
        err = sim - obs
        lhs = rmse(p) ** 2
        rhs = bias(p)[0] ** 2 + err.var()
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestCc:
    def test_perfect(self):
        assert cc(paired([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])) == pytest.approx(1.0)

    def test_anticorrelation(self):
        obs = np.array([1.0, 2.0, 3.0])
        sim = 10.0 - obs  # negated and shifted to stay nonnegative
        assert cc(paired(obs, sim)) == pytest.approx(-1.0)

    def test_scale_invariance(self):
        obs = np.array([1.0, 2.0, 5.0, 3.0])
        assert cc(paired(obs, 2.0 * obs)) == pytest.approx(1.0)

    def test_affine_invariance(self, rng):
        obs = rng.uniform(1.0, 10.0, size=60)
        sim = rng.uniform(1.0, 10.0, size=60)
        base = cc(paired(obs, sim))
        assert cc(paired(obs, 3.0 * sim + 7.0)) == pytest.approx(base, rel=1e-12)
        assert cc(paired(0.5 * obs + 2.0, sim)) == pytest.approx(base, rel=1e-12)

    def test_zero_variance_undefined(self):
        with pytest.raises(UndefinedMetricError):
            cc(paired([1.0, 2.0], [5.0, 5.0]))


class TestKge:
    def test_perfect(self):
        assert kge(paired([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])) == pytest.approx(1.0)

    def test_doubled_sim(self):
        obs = np.array([1.0, 2.0, 3.0, 4.0])
        assert kge(paired(obs, 2.0 * obs)) == pytest.approx(1.0 - math.sqrt(2.0),
                                                            abs=1e-12)

    def test_constant_offset_identity(self):
        obs = np.array([2.0, 4.0, 6.0, 8.0])
        c = 1.5
        expected = 1.0 - abs(c / obs.mean())
        assert kge(paired(obs, obs + c)) == pytest.approx(expected, abs=1e-12)

    def test_zero_mean_undefined(self):
        with pytest.raises(UndefinedMetricError):
            kge(paired([-1.0, 1.0], [1.0, 2.0]))


class TestPairwiseDeletion:
    def test_missing_pairs_dropped(self):
        obs = np.array([1.0, np.nan, 3.0, 4.0])
        sim = np.array([1.1, 9.9, 3.2, 4.1])
        full = paired([1.0, 3.0, 4.0], [1.1, 3.2, 4.1])
        gappy = paired(obs, sim)
        assert nse(gappy) == pytest.approx(nse(full), rel=1e-15)
        assert rmse(gappy) == pytest.approx(rmse(full), rel=1e-15)
        assert cc(gappy) == pytest.approx(cc(full), rel=1e-15)
        assert kge(gappy) == pytest.approx(kge(full), rel=1e-15)
        assert bias(gappy) == pytest.approx(bias(full), rel=1e-15)

    def test_bundle_reports_pair_count(self):
        obs = np.array([1.0, np.nan, 3.0, 4.0])
        sim = np.array([1.1, 9.9, 3.2, 4.1])
        bundle = compute_all(paired(obs, sim))
        assert bundle.n_pairs == 3
        assert bundle.nse is not None

    def test_bundle_handles_undefined(self):
        bundle = compute_all(paired([2.0, 2.0], [1.0, 2.0]))
        assert bundle.nse is None
        assert bundle.kge is None
        assert bundle.rmse is not None


class TestBounds:
    def test_nse_kge_never_exceed_one(self, rng):
        for _ in range(200):
            obs = rng.uniform(0.5, 20.0, size=30)
            sim = rng.uniform(0.5, 20.0, size=30)
            p = paired(obs, sim)
            assert nse(p) <= 1.0
            assert kge(p) <= 1.0
            assert -1.0 <= cc(p) <= 1.0
            assert rmse(p) >= 0.0
