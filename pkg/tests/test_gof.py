import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from accfit.errors import DegenerateInputError
from accfit.gof import (
    DEFAULT_PENALTY,
    GofConfig,
    GofKind,
    MoP,
    evaluate,
    mop_errors,
    nrmse,
    nrmse_sva,
    penalized_objective,
    rmse,
    theil_u,
    theil_u_multi,
)

values = st.floats(-100, 100).filter(lambda x: x == 0 or abs(x) > 1e-6)
series = st.lists(values, min_size=3, max_size=40)


class TestRmse:
    def test_hand_value(self):
        assert rmse([1, 2, 3, 4], [2, 2, 5, 3]) == pytest.approx(math.sqrt(1.5), rel=1e-15)
        assert rmse([0.0, 0.0], [1.0, 2.0]) == pytest.approx(math.sqrt(2.5), rel=1e-15)

    def test_constant_offset(self):
        obs = np.linspace(3, 9, 50)
        assert rmse(obs + 0.7, obs) == pytest.approx(0.7, rel=1e-12)

    def test_identical_is_zero(self):
        x = np.random.default_rng(0).normal(size=30)
        assert rmse(x, x) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rmse([1.0, 2.0], [1.0])

    def test_stacked_rows_with_own_starts(self):
        obs = np.array([1.0, 1.0, 1.0, 1.0])
        sim = np.array([[9.0, 2.0, 2.0, 2.0], [9.0, 9.0, 3.0, 3.0]])
        np.testing.assert_allclose(rmse(sim, obs, np.array([1, 2])), [1.0, 2.0], rtol=1e-15)


class TestNrmse:
    def test_double_observation_is_one(self):
        obs = np.array([1.0, -2.0, 3.0, 0.5])
        assert nrmse(2 * obs, obs) == pytest.approx(1.0, rel=1e-15)

    def test_zero_observation(self):
        with pytest.raises(DegenerateInputError):
            nrmse([1.0, 2.0], [0.0, 0.0])

    @given(series, st.floats(1e-3, 1e3))
    def test_scale_invariance(self, obs, c):
        obs = np.array(obs)
        if not np.any(obs):
            obs[0] = 1.0
        sim = obs[::-1] + 0.5
        assert nrmse(c * sim, c * obs) == pytest.approx(nrmse(sim, obs), rel=1e-12, abs=1e-12)


class TestTheil:
    def test_perfect_and_opposite(self):
        x = np.array([1.0, -2.0, 4.0])
        assert theil_u(x, x) == 0.0
        assert theil_u(-x, x) == pytest.approx(1.0, rel=1e-15)

    def test_zero_prediction(self):
        assert theil_u([0.0, 0.0], [1.0, -1.0]) == pytest.approx(1.0)

    def test_both_zero(self):
        with pytest.raises(DegenerateInputError):
            theil_u([0.0, 0.0], [0.0, 0.0])

    @given(series, series)
    def test_bounded(self, a, b):
        n = min(len(a), len(b))
        a, b = np.array(a[:n]), np.array(b[:n])
        if not (np.any(a) or np.any(b)):
            return
        assert 0.0 <= theil_u(a, b) <= 1.0 + 1e-12

    def test_multi_channel_sum(self):
        s, v = (np.array([1.0, 2.0]), np.array([2.0, 2.0])), (np.array([3.0, 1.0]), np.array([1.0, 1.0]))
        assert theil_u_multi([s, v]) == pytest.approx(theil_u(*s) + theil_u(*v), rel=1e-15)


class TestComposite:
    def obs(self):
        t = np.linspace(0, 1, 20)
        return MoP(10 + t, 5 + t, 1 + t)

    def test_channel_offsets_add(self):
        obs = self.obs()
        sim = MoP(obs.s * 1.1, obs.v * 1.2, obs.a * 1.3)
        assert nrmse_sva(sim, obs, start=0) == pytest.approx(0.6, rel=1e-12)
        assert nrmse_sva(sim, obs, weights=(1, 0, 2), start=0) == pytest.approx(0.7, rel=1e-12)

    def test_kinds(self):
        obs = self.obs()
        sim = MoP(obs.s + 1, obs.v + 1, obs.a)
        assert evaluate(sim, obs, GofConfig(GofKind.RMSE_S)) == pytest.approx(1.0)
        assert evaluate(sim, obs, GofConfig(GofKind.RMSE_V)) == pytest.approx(1.0)
        assert evaluate(sim, obs, GofConfig(GofKind.THEIL_U_SVA)) == pytest.approx(
            evaluate(sim, obs, GofConfig(GofKind.THEIL_U_SV)))
        assert evaluate(sim, obs, GofConfig(GofKind.NRMSE_SVA)) == pytest.approx(
            evaluate(sim, obs, GofConfig(GofKind.NRMSE_SV)))

    def test_start_index_excludes_prefix(self):
        obs = self.obs()
        sim = MoP(obs.s.copy(), obs.v.copy(), obs.a.copy())
        sim.s[:4] += 1e3
        sim.v[:4] -= 50.0
        sim.a[:4] *= -7.0
        assert nrmse_sva(sim, obs, start=4) == 0.0
        assert evaluate(sim, obs, GofConfig(start_index=4)) == 0.0
        assert evaluate(sim, obs, GofConfig(start_index=3)) > 0.0

    def test_start_from_simulation(self):
        class Sim:
            gof_start_index = 2

        obs = self.obs()
        sim = Sim()
        sim.s, sim.v, sim.a = obs.s + np.r_[5.0, 5.0, np.zeros(18)], obs.v, obs.a
        assert nrmse_sva(sim, obs) == 0.0

    def test_bad_start(self):
        obs = self.obs()
        with pytest.raises(ValueError):
            rmse(obs.s, obs.s, 20)

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            GofConfig(weights=(1.0, -1.0, 1.0))
        with pytest.raises(ValueError):
            GofConfig(kind="mae")

    def test_mop_breakdown(self):
        obs = self.obs()
        sim = MoP(obs.s + 1, obs.v, obs.a)
        out = mop_errors(sim, obs, start=0)
        assert out["rmse_s"] == pytest.approx(1.0)
        assert out["rmse_v"] == 0.0 and out["nrmse_a"] == 0.0


class TestPenalty:
    def test_collision_gets_penalty(self):
        class Sim:
            collision = object()

        assert penalized_objective(Sim(), None) == DEFAULT_PENALTY == 1e10
        assert penalized_objective(Sim(), None, penalty_value=5.0) == 5.0

    def test_clean_run_is_plain_gof(self):
        obs = MoP(np.ones(5) * 10, np.ones(5) * 5, np.ones(5))
        sim = MoP(obs.s * 1.1, obs.v, obs.a)
        assert penalized_objective(sim, obs) == pytest.approx(0.1)
