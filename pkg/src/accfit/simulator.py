"""Closed-loop follower simulation behind a recorded leader.

Each step runs perceive -> controller -> dynamics -> constraints -> ballistic
update. The core, :func:`simulate_batch`, advances many parameter sets in
lock-step (one lane per set); :func:`simulate_follower` is the single-lane
view used everywhere outside the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from accfit.controllers import PerceivedState, command_law
from accfit.errors import ConfigError, NumericalError
from accfit.models import Constraints, Delay, Dynamics, ModelSpec
from accfit.physics import (
    CONSTANT_BOUNDS,
    GRAVITY,
    DelayBuffer,
    MfcCurves,
    lag_step,
    wheel_to_vehicle,
)
from accfit.trajectory_data import KinematicSeries

CommandFn = Callable[[PerceivedState, Mapping], "float | np.ndarray"]


@dataclass(frozen=True)
class PhysicsConfig:
    """Fixed (non-calibrated) vehicle constants and constraint envelopes."""

    m0: float = 2000.0
    phi_e: float = 1.05
    g: float = GRAVITY
    accel_bounds: tuple[float, float] = CONSTANT_BOUNDS
    mfc: MfcCurves = field(default_factory=MfcCurves.default)


class Collision(NamedTuple):
    index: int
    time: float


@dataclass(frozen=True)
class SimResult:
    follower: KinematicSeries
    spacing: np.ndarray
    a_cmd: np.ndarray
    collision: Collision | None
    gof_start_index: int

    @property
    def s(self) -> np.ndarray:
        return self.spacing

    @property
    def v(self) -> np.ndarray:
        return self.follower.v

    @property
    def a(self) -> np.ndarray:
        return self.follower.a

    @property
    def t(self) -> np.ndarray:
        return self.follower.t


@dataclass
class BatchResult:
    """Arrays of shape ``(n, T)``; entries after a lane's termination are NaN."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    a_cmd: np.ndarray
    s: np.ndarray
    collision_index: np.ndarray  # -1 when collision-free
    nonfinite_index: np.ndarray  # -1 when every state stayed finite
    gof_start_index: np.ndarray

    @property
    def collided(self) -> np.ndarray:
        return self.collision_index >= 0

    @property
    def failed(self) -> np.ndarray:
        return self.collided | (self.nonfinite_index >= 0)


def required_params(spec: ModelSpec, custom_command: bool = False) -> tuple[str, ...]:
    if not custom_command:
        return spec.param_names
    return tuple(n for n in spec.param_names if n in ("tau_p", "tau_a", "m_load", "f0", "f1", "f2"))


def gof_start_index(tau_p, dt: float):
    """First sample index at or after the perception-delay window."""
    return np.ceil(np.asarray(tau_p, dtype=float) / dt - 1e-9).astype(int)


def detect_collision(spacing: Sequence[float]) -> int | None:
    """Index of the first non-positive spacing, or None."""
    s = np.asarray(spacing, dtype=float)
    if s.size == 0:
        raise ValueError("spacing series is empty")
    hit = np.flatnonzero(s <= 0)
    return int(hit[0]) if hit.size else None


def _lanes(params: Mapping, names) -> tuple[dict, int]:
    missing = [n for n in names if n not in params]
    if missing:
        raise ConfigError(f"missing parameters {missing}")
    arrays = {k: np.asarray(v, dtype=float) for k, v in params.items()}
    sizes = {a.size for a in arrays.values() if a.ndim > 0}
    if len(sizes) > 1:
        raise ConfigError(f"parameter arrays have inconsistent lengths {sorted(sizes)}")
    n = sizes.pop() if sizes else 1
    return {k: np.broadcast_to(a.reshape(-1) if a.ndim else a, (n,)) for k, a in arrays.items()}, n


def simulate_batch(
    leader: KinematicSeries,
    init: tuple[float, float],
    spec: ModelSpec,
    params: Mapping,
    length: float,
    slope: np.ndarray | None = None,
    physics: PhysicsConfig | None = None,
    command_fn: CommandFn | None = None,
) -> BatchResult:
    """Simulate ``n`` parameter sets behind the same leader.

    Args:
        leader: leader kinematics (defines the grid and the horizon).
        init: follower position and speed at the first sample.
        spec: model variant.
        params: parameter values; scalars or arrays of a common length n.
        length: leader vehicle length subtracted from the position gap.
        slope: road grade per sample (rad); only nonlinear dynamics use it.
        physics: fixed vehicle constants; defaults to :class:`PhysicsConfig`.
        command_fn: replaces the spec's controller (``f(state, params) -> a_cmd``).
    """
    physics = physics or PhysicsConfig()
    p, n = _lanes(params, required_params(spec, command_fn is not None))
    law = command_fn or command_law(spec)
    dt = leader.dt
    T = len(leader)
    xl = np.asarray(leader.x)
    vl = np.asarray(leader.v)
    grade = np.zeros(T) if slope is None else np.asarray(slope, dtype=float)
    if len(grade) != T:
        raise ConfigError("slope channel length differs from the leader series")

    x = np.full((T, n), np.nan)
    v = np.full((T, n), np.nan)
    a = np.full((T, n), np.nan)
    a_cmd_hist = np.full((T, n), np.nan)
    s = np.full((T, n), np.nan)
    x[0] = init[0]
    v[0] = init[1]
    a[0] = 0.0
    a_cmd_hist[0] = 0.0
    s[0] = xl[0] - init[0] - length
    if init[1] < 0:
        raise ConfigError("initial follower speed must be non-negative")
    if s[0, 0] <= 0:
        raise ConfigError(f"initial spacing must be positive, got {s[0, 0]:.3f} m")

    delayed = spec.delay is Delay.CONSTANT
    tau_p = p["tau_p"] if delayed else np.zeros(n)
    if delayed:
        if np.any(tau_p < 0):
            raise ConfigError("perception delay must be non-negative")
        buffer = DelayBuffer(float(np.max(tau_p)), dt, width=n, t0=float(leader.t[0]))
    if spec.dynamics is not Dynamics.NONE:
        if np.any(p["tau_a"] <= 0):
            raise ConfigError("actuation lag must be positive")
        decay = np.exp(-dt / p["tau_a"])
    if spec.dynamics is Dynamics.NONLINEAR:
        mass = physics.m0 + p["m_load"]
        if np.any(mass <= 0):
            raise ConfigError("vehicle mass must be positive")
    a_lo, a_hi = physics.accel_bounds

    collision = np.full(n, -1)
    nonfinite = np.full(n, -1)
    active = np.ones(n, dtype=bool)
    lag_state = np.zeros(n)
    xf, vf, sf = x[0].copy(), v[0].copy(), s[0].copy()

    with np.errstate(all="ignore"):
        for k in range(1, T):
            dv = vl[k - 1] - vf
            if delayed:
                buffer.push(PerceivedState(vf, sf, dv))
                st = buffer.perceive(tau_p)
            else:
                st = PerceivedState(vf, sf, dv)
            if not active.all():
                st = PerceivedState(st.v_f, np.where(active, st.s, 1.0), st.dv)
            cmd = np.broadcast_to(law(st, p), (n,))

            if spec.dynamics is Dynamics.NONE:
                acc = cmd
            else:
                lag_state = lag_step(lag_state, cmd, decay)
                if spec.dynamics is Dynamics.LINEAR:
                    acc = lag_state
                else:
                    acc = wheel_to_vehicle(lag_state, vf, grade[k - 1], p["f0"], p["f1"], p["f2"],
                                           mass, physics.phi_e, physics.g)
            if spec.constraints is Constraints.CONSTANT:
                acc = np.minimum(np.maximum(acc, a_lo), a_hi)
            elif spec.constraints is Constraints.MFC:
                lo, hi = physics.mfc.bounds(vf)
                acc = np.minimum(np.maximum(acc, lo), hi)

            v_new = vf + acc * dt
            dx = (v_new + vf) / 2.0 * dt
            stop = v_new < 0.0
            if stop.any():
                # stop inside the step instead of reversing
                dx = np.where(stop, vf * vf / (2.0 * np.abs(acc)), dx)
                v_new = np.where(stop, 0.0, v_new)
            xf = xf + dx
            vf = v_new
            sf = xl[k] - xf - length

            bad = active & ~(np.isfinite(xf) & np.isfinite(vf) & np.isfinite(acc))
            if bad.any():
                nonfinite[bad] = k
                active &= ~bad
            hit = active & (sf <= 0.0)
            if hit.any():
                collision[hit] = k
            x[k] = np.where(active, xf, np.nan)
            v[k] = np.where(active, vf, np.nan)
            a[k] = np.where(active, acc, np.nan)
            a_cmd_hist[k] = np.where(active, cmd, np.nan)
            s[k] = np.where(active, sf, np.nan)
            if hit.any():
                active &= ~hit
            if not active.any():
                break

    return BatchResult(
        t=np.asarray(leader.t),
        x=x.T, v=v.T, a=a.T, a_cmd=a_cmd_hist.T, s=s.T,
        collision_index=collision,
        nonfinite_index=nonfinite,
        gof_start_index=gof_start_index(tau_p, dt) if delayed else np.zeros(n, dtype=int),
    )


def simulate_follower(
    leader: KinematicSeries,
    init: tuple[float, float],
    spec: ModelSpec,
    params: Mapping[str, float],
    length: float,
    slope: np.ndarray | None = None,
    physics: PhysicsConfig | None = None,
    command_fn: CommandFn | None = None,
) -> SimResult:
    """Simulate one follower; on collision the result stops at the colliding sample.

    Raises:
        ConfigError: missing or invalid parameters, or a non-positive initial spacing.
        NumericalError: the state became non-finite (the step index is attached).
    """
    if len(leader) < 2:
        raise ConfigError("leader series needs at least 2 samples")
    for name, value in params.items():
        if np.ndim(value) != 0:
            raise ConfigError(f"parameter {name} must be a scalar for a single simulation")
    res = simulate_batch(leader, init, spec, params, length, slope, physics, command_fn)
    if res.nonfinite_index[0] >= 0:
        raise NumericalError("non-finite follower state", step=int(res.nonfinite_index[0]))
    end = len(leader)
    collision = None
    if res.collision_index[0] >= 0:
        k = int(res.collision_index[0])
        collision = Collision(k, float(leader.t[k]))
        end = k + 1
    follower = KinematicSeries(leader.t[:end], res.x[0, :end], res.v[0, :end], res.a[0, :end])
    spacing = res.s[0, :end].copy()
    a_cmd = res.a_cmd[0, :end].copy()
    spacing.setflags(write=False)
    a_cmd.setflags(write=False)
    return SimResult(follower, spacing, a_cmd, collision, int(res.gof_start_index[0]))


class FollowerSetup(NamedTuple):
    spec: ModelSpec
    params: Mapping[str, float]
    length: float
    init: tuple[float, float]


def simulate_platoon(
    leader: KinematicSeries,
    followers: Sequence[FollowerSetup | tuple],
    slope: np.ndarray | None = None,
    physics: PhysicsConfig | None = None,
) -> list[SimResult]:
    """Chain followers: each simulated trajectory is the next follower's leader.

    ``length`` in each setup is the length of the vehicle ahead of that
    follower. A collision truncates the chain's remaining horizon at the
    collision time.
    """
    results = []
    current = leader
    for setup in followers:
        spec, params, length, init = FollowerSetup(*setup)
        grade = None if slope is None else np.asarray(slope)[: len(current)]
        res = simulate_follower(current, init, spec, params, length, grade, physics)
        results.append(res)
        current = res.follower
        if len(current) < 2:
            break
    return results


def is_ballistic(series: KinematicSeries, rtol: float = 1e-9) -> bool:
    """Check both ballistic update identities between all consecutive samples."""
    dt = series.dt
    v, x, a = series.v, series.x, series.a
    dv_ok = np.allclose(v[1:], v[:-1] + a[1:] * dt, rtol=rtol, atol=rtol * max(1.0, np.max(np.abs(v))))
    dx = (v[1:] + v[:-1]) / 2.0 * dt
    scale = max(1.0, float(np.max(np.abs(x))))
    dx_ok = np.allclose(x[1:], x[:-1] + dx, rtol=rtol, atol=rtol * scale)
    return bool(dv_ok and dx_ok)


def sim_to_rows(res: SimResult) -> list[dict]:
    return [
        {"t": float(t), "x": float(x), "v": float(v), "a": float(a), "a_cmd": float(c), "s": float(s)}
        for t, x, v, a, c, s in zip(res.t, res.follower.x, res.v, res.a, res.a_cmd, res.spacing)
    ]


def speed_floor_steps(res: SimResult) -> np.ndarray:
    """Indices where the speed floor engaged (the ballistic identities do not hold there)."""
    v, a, dt = res.v, res.a, res.follower.dt
    return np.flatnonzero((v[1:] == 0.0) & (v[:-1] + a[1:] * dt < 0.0)) + 1

