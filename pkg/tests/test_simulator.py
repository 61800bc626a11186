import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from accfit.controllers import equilibrium_spacing
from accfit.errors import ConfigError, NumericalError
from accfit.models import get_model
from accfit.simulator import (
    FollowerSetup,
    detect_collision,
    gof_start_index,
    is_ballistic,
    sim_to_rows,
    simulate_batch,
    simulate_follower,
    simulate_platoon,
    speed_floor_steps,
)
from accfit.synthetic import PLATOON_LAYOUT, TRUTH_PARAMS, synthetic_platoon
from accfit.trajectory_data import KinematicSeries, consistent_series

from conftest import BASE_PARAMS, constant_leader, full_params, synthetic_follower


def braking_leader(v0=20.0, decel=-3.0, duration=20.0, dt=0.1, x0=0.0):
    n = int(round(duration / dt)) + 1
    t = np.arange(n) * dt
    v = np.maximum(v0 + decel * t, 0.0)
    return KinematicSeries(t, x0 + np.concatenate([[0.0], np.cumsum((v[1:] + v[:-1]) / 2 * dt)]), v)


def test_constant_command_is_exact():
    leader = constant_leader(speed=40.0, duration=100.0, x0=1e5)
    spec = get_model(37)
    res = simulate_follower(leader, (0.0, 3.0), spec, {}, 5.0, command_fn=lambda s, p: 0.05)
    t = leader.t
    np.testing.assert_allclose(res.v[1:], 3.0 + 0.05 * t[1:], rtol=1e-9)
    np.testing.assert_allclose(res.follower.x[1:], 3.0 * t[1:] + 0.025 * t[1:] ** 2, rtol=1e-9)


@pytest.mark.parametrize("model_id", [1, 19, 37, 55, 73])
def test_equilibrium_is_held(model_id):
    spec = get_model(model_id)
    p = BASE_PARAMS[model_id]
    leader = constant_leader(speed=20.0, duration=100.0, x0=500.0)
    s_eq = equilibrium_spacing(spec, 20.0, p)
    res = simulate_follower(leader, (500.0 - 5.0 - s_eq, 20.0), spec, p, 5.0)
    assert res.collision is None
    assert np.max(np.abs(res.s - s_eq)) < 1e-3


def test_collision_is_flagged_and_truncates():
    leader = braking_leader(x0=100.0)
    p = dict(ks=0.01, kv=0.01, k0=0.5, v0=30.0, d0=2.0, th=1.0)
    res = simulate_follower(leader, (100.0 - 5.0 - 0.1, 20.0), get_model(37), p, 5.0)
    assert res.collision is not None
    k = res.collision.index
    assert res.s[k] <= 0 and np.all(res.s[:k] > 0)
    assert len(res.t) == k + 1
    assert res.collision.time == pytest.approx(leader.t[k])


def test_detect_collision():
    assert detect_collision([5.0, 1.0, 3.0]) is None
    assert detect_collision([5.0, 1.0, -0.2, 3.0]) == 2
    assert detect_collision([0.0]) == 0
    with pytest.raises(ValueError):
        detect_collision([])


def test_missing_parameter():
    leader = constant_leader()
    with pytest.raises(ConfigError, match="missing"):
        simulate_follower(leader, (-50.0, 20.0), get_model(1), {"delta": 4.0}, 5.0)


def test_non_positive_initial_spacing():
    leader = constant_leader()
    with pytest.raises(ConfigError):
        simulate_follower(leader, (-5.0, 20.0), get_model(1), BASE_PARAMS[1], 5.0)


def test_non_finite_state_reports_step():
    leader = constant_leader(duration=5.0, x0=100.0)
    with pytest.raises(NumericalError, match="step 1"):
        simulate_follower(leader, (0.0, 20.0), get_model(37), {}, 5.0, command_fn=lambda s, p: np.inf)


def test_gof_start_index():
    assert gof_start_index(0.0, 0.1) == 0
    assert gof_start_index(0.3, 0.1) == 3
    assert gof_start_index(0.35, 0.1) == 4
    leader, res = synthetic_follower(10)
    assert res.gof_start_index == 4


def test_deterministic(leader):
    a = simulate_follower(leader, (-60.0, 25.0), get_model(90), full_params(90), 5.0)
    b = simulate_follower(leader, (-60.0, 25.0), get_model(90), full_params(90), 5.0)
    np.testing.assert_array_equal(a.follower.x, b.follower.x)
    np.testing.assert_array_equal(a.a_cmd, b.a_cmd)


def test_batch_lanes_match_single_runs(leader):
    spec = get_model(22)
    base = full_params(22)
    ths = np.array([0.8, 1.0, 1.3])
    batch = simulate_batch(leader, (-60.0, 25.0), spec, dict(base, th=ths), 5.0)
    for i, th in enumerate(ths):
        single = simulate_follower(leader, (-60.0, 25.0), spec, dict(base, th=th), 5.0)
        np.testing.assert_array_equal(batch.x[i], single.follower.x)


def test_collided_lane_does_not_disturb_others():
    leader = braking_leader(x0=100.0)
    spec = get_model(37)
    p = dict(ks=np.array([0.01, 0.5]), kv=np.array([0.01, 1.0]), k0=0.5, v0=30.0, d0=2.0, th=1.0)
    batch = simulate_batch(leader, (100.0 - 5.0 - 20.0, 20.0), spec, p, 5.0)
    single = simulate_follower(leader, (100.0 - 5.0 - 20.0, 20.0), spec,
                               {k: (v[1] if np.ndim(v) else v) for k, v in p.items()}, 5.0)
    assert batch.collision_index[0] > 0 and batch.collision_index[1] == -1
    assert np.isnan(batch.s[0, -1])
    np.testing.assert_array_equal(batch.s[1], single.s)


def test_speed_floor_stops_without_reversing():
    leader = constant_leader(speed=10.0, duration=5.0, x0=200.0)
    res = simulate_follower(leader, (0.0, 1.0), get_model(37), {}, 5.0, command_fn=lambda s, p: -3.0)
    assert np.all(res.v >= 0)
    floors = speed_floor_steps(res)
    assert floors[0] == 4
    assert res.v[4] == 0.0
    assert res.follower.x[4] - res.follower.x[3] == pytest.approx(res.v[3] ** 2 / 6.0, rel=1e-12)
    assert res.follower.x[-1] == pytest.approx(1.0 / 6.0, rel=1e-12)


@given(st.integers(1, 90), st.integers(0, 10_000))
def test_physical_invariants(model_id, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(301) * 0.1
    v_lead = np.clip(20 + np.cumsum(rng.normal(0, 0.3, 301)), 0, 35)
    leader = consistent_series(KinematicSeries(t, np.full(301, 300.0), v_lead))
    spec = get_model(model_id)
    res = simulate_follower(leader, (300.0 - 5.0 - 40.0, 20.0), spec, full_params(model_id), 5.0)
    assert np.all(res.v >= 0)
    keep = np.setdiff1d(np.arange(1, len(res.t)), speed_floor_steps(res))
    v, x, a = res.v, res.follower.x, res.a
    np.testing.assert_allclose(v[keep], v[keep - 1] + a[keep] * 0.1, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(x[keep], x[keep - 1] + (v[keep] + v[keep - 1]) / 2 * 0.1, rtol=1e-9, atol=1e-7)
    if res.collision is not None:
        assert res.s[-1] <= 0 and np.all(res.s[:-1] > 0)


class TestPlatoon:
    def test_single_follower_matches(self, leader):
        p = BASE_PARAMS[1]
        chain = simulate_platoon(leader, [FollowerSetup(get_model(1), p, 5.0, (-60.0, 25.0))])
        single = simulate_follower(leader, (-60.0, 25.0), get_model(1), p, 5.0)
        np.testing.assert_array_equal(chain[0].follower.x, single.follower.x)

    def test_equilibrium_chain(self):
        leader = constant_leader(speed=20.0, duration=60.0, x0=1000.0)
        spec = get_model(1)
        p = BASE_PARAMS[1]
        s_eq = equilibrium_spacing(spec, 20.0, p)
        setups, x = [], 1000.0
        for _ in range(4):
            x -= 5.0 + s_eq
            setups.append((spec, p, 5.0, (x, 20.0)))
        for res in simulate_platoon(leader, setups):
            assert np.max(np.abs(res.s - s_eq)) < 1e-3

    def test_layout_p1(self, leader):
        traj = synthetic_platoon("P1", PLATOON_LAYOUT["P1"], leader, TRUTH_PARAMS)
        assert [v.vehicle_id for v in traj.vehicles] == ["AudiA8", "AudiA6", "BMW", "Mercedes", "Tesla"]
        assert all(is_ballistic(v.series) for v in traj.vehicles[1:])

    def test_collision_truncates_downstream(self):
        leader = braking_leader(x0=100.0)
        weak = dict(ks=0.01, kv=0.01, k0=0.5, v0=30.0, d0=2.0, th=1.0)
        spec = get_model(37)
        out = simulate_platoon(leader, [(spec, weak, 5.0, (94.9, 20.0)), (spec, weak, 5.0, (60.0, 20.0))])
        assert out[0].collision is not None
        assert len(out[1].t) <= len(out[0].t)


def test_rows_export(leader):
    _, res = synthetic_follower(1, leader)
    rows = sim_to_rows(res)
    assert set(rows[0]) == {"t", "x", "v", "a", "a_cmd", "s"}
    assert len(rows) == len(res.t)
