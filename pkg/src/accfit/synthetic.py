"""Scripted leaders and synthetic platoons for tests, demos and self-calibration checks."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from accfit.models import ModelSpec, get_model
from accfit.simulator import PhysicsConfig, simulate_platoon
from accfit.trajectory_data import KinematicSeries, PlatoonTrajectory, Vehicle, consistent_series

# Leader followed by followers 1-4, per platoon.
PLATOON_LAYOUT = {
    "P1": ("AudiA8", "AudiA6", "BMW", "Mercedes", "Tesla"),
    "P2": ("AudiA8", "AudiA6", "BMW", "Mercedes", "Tesla"),
    "P3": ("AudiA8", "Tesla", "BMW", "AudiA6", "Mercedes"),
    "P4": ("AudiA8", "Tesla", "BMW", "AudiA6", "Mercedes"),
    "P5": ("AudiA8", "Tesla", "BMW", "AudiA6", "Mercedes"),
    "P6": ("AudiA8", "Mercedes", "BMW", "Tesla", "AudiA6"),
    "P7": ("AudiA8", "Mercedes", "BMW", "Tesla", "AudiA6"),
}

VEHICLE_LENGTHS = {"AudiA8": 5.3, "AudiA6": 4.9, "BMW": 4.7, "Mercedes": 4.9, "Tesla": 4.7}

# Per-vehicle "true" ACC behaviour used to synthesise followers (IDM + linear lag).
TRUTH_MODEL_ID = 4
TRUTH_PARAMS = {
    "Tesla": {"delta": 4.0, "v0": 33.0, "d0": 2.5, "th": 1.4, "a_max": 1.4, "a_min": -2.0, "tau_a": 0.45},
    "BMW": {"delta": 3.0, "v0": 32.0, "d0": 3.0, "th": 1.8, "a_max": 1.1, "a_min": -1.6, "tau_a": 0.6},
    "AudiA6": {"delta": 5.0, "v0": 34.0, "d0": 2.0, "th": 1.2, "a_max": 1.8, "a_min": -2.5, "tau_a": 0.4},
    "Mercedes": {"delta": 4.0, "v0": 31.0, "d0": 3.5, "th": 1.6, "a_max": 1.2, "a_min": -1.8, "tau_a": 0.7},
}


def scripted_leader(
    set_speeds: Sequence[tuple[float, float]] = ((0.0, 25.0), (12.0, 15.0), (30.0, 27.0), (48.0, 20.0)),
    duration: float = 60.0,
    dt: float = 0.1,
    x0: float = 0.0,
    gain: float = 0.6,
    accel_limits: tuple[float, float] = (-2.0, 1.5),
) -> KinematicSeries:
    """Leader tracking a piecewise-constant set speed with bounded acceleration.

    ``set_speeds`` lists ``(start time, set speed)`` switches; the first entry
    also sets the initial speed.
    """
    n = int(round(duration / dt)) + 1
    t = np.arange(n) * dt
    target = np.empty(n)
    for start, speed in set_speeds:
        target[t >= start - 1e-9] = speed
    v = np.empty(n)
    v[0] = set_speeds[0][1]
    for k in range(1, n):
        acc = np.clip(gain * (target[k - 1] - v[k - 1]), *accel_limits)
        v[k] = max(v[k - 1] + acc * dt, 0.0)
    return consistent_series(KinematicSeries(t, np.full(n, x0), v))


def random_leader(rng: np.random.Generator, duration: float = 60.0, dt: float = 0.1) -> KinematicSeries:
    """Leader with random set-speed switches in the 14-28 m/s band.

    Switches fall in the middle of the horizon, clear of a 5 s margin when
    it fits (``duration`` must be positive).
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    margin = min(5.0, duration / 4)
    n_switch = int(rng.integers(2, 6))
    starts = np.sort(rng.uniform(margin, duration - margin, n_switch))
    speeds = rng.uniform(14.0, 28.0, n_switch + 1)
    schedule = [(0.0, speeds[0])] + list(zip(starts, speeds[1:]))
    return scripted_leader(schedule, duration, dt)


def synthetic_platoon(
    platoon_id: str,
    layout: Sequence[str],
    leader: KinematicSeries,
    truth: Mapping[str, Mapping[str, float]] = TRUTH_PARAMS,
    spec: ModelSpec | None = None,
    lengths: Mapping[str, float] = VEHICLE_LENGTHS,
    physics: PhysicsConfig | None = None,
) -> PlatoonTrajectory:
    """Simulate a platoon behind ``leader``; each follower starts at 1.1x its CTH gap."""
    spec = spec or get_model(TRUTH_MODEL_ID)
    setups = []
    x_ahead = float(leader.x[0])
    v0 = float(leader.v[0])
    for ahead, vid in zip(layout[:-1], layout[1:]):
        p = truth[vid]
        gap = 1.1 * (p["d0"] + p["th"] * v0) + 2.0
        x_init = x_ahead - lengths[ahead] - gap
        setups.append((spec, dict(p), lengths[ahead], (x_init, v0)))
        x_ahead = x_init
    results = simulate_platoon(leader, setups, physics=physics)
    n = min(len(r.follower) for r in results)
    vehicles = [Vehicle(layout[0], lengths[layout[0]], leader.head(n))]
    for vid, res in zip(layout[1:], results):
        vehicles.append(Vehicle(vid, lengths[vid], res.follower.head(n)))
    return PlatoonTrajectory(platoon_id, tuple(vehicles), leader.dt, metadata={"synthetic": True})


def synthetic_dataset(
    seed: int = 0,
    duration: float = 60.0,
    dt: float = 0.1,
    platoons: Mapping[str, Sequence[str]] = PLATOON_LAYOUT,
) -> dict[str, PlatoonTrajectory]:
    """Seven platoons in the field-test vehicle orders, each behind its own random leader."""
    rng = np.random.default_rng(seed)
    return {
        pid: synthetic_platoon(pid, layout, random_leader(rng, duration, dt))
        for pid, layout in platoons.items()
    }
