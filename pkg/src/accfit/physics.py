"""Lower-level physics: actuation dynamics, acceleration limits and perception delay."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from accfit.controllers import PerceivedState
from accfit.errors import ConfigError, StateError

GRAVITY = 9.81
CONSTANT_BOUNDS = (-7.0, 5.0)


# -- vehicle dynamics -----------------------------------------------------------

def dynamics_none(a_cmd):
    return a_cmd


def lag_factor(tau_a, dt):
    """Per-step decay ``exp(-dt / tau_a)`` of the first-order lag."""
    if np.any(np.asarray(tau_a) <= 0) or dt <= 0:
        raise ConfigError("actuation lag and time step must be positive")
    return np.exp(-dt / tau_a)


def lag_step(a_prev, a_cmd, decay):
    """Exact zero-order-hold update of ``tau_a a' + a = a_cmd``."""
    return a_cmd + (a_prev - a_cmd) * decay


def dynamics_linear_step(a_lag, a_cmd, tau_a, dt):
    """One step of the first-order actuation lag.

    Returns:
        ``(a_f, new_state)``; for the linear model both are the lagged
        acceleration.
    """
    a_f = lag_step(a_lag, a_cmd, lag_factor(tau_a, dt))
    return a_f, a_f


@dataclass(frozen=True)
class NonlinearDynamicsConfig:
    """Vehicle constants for the road-load model.

    ``m0``, ``phi_e``, ``r_w`` and ``g`` are fixed configuration; the wheel
    radius cancels out of the force balance and is kept for reference only.
    """

    tau_a: float = 0.5
    m0: float = 2000.0
    m_load: float = 250.0
    f0: float = 200.0
    f1: float = 0.5
    f2: float = 0.03
    phi_e: float = 1.05
    g: float = GRAVITY
    r_w: float = 0.33

    def __post_init__(self):
        if self.m0 + self.m_load <= 0:
            raise ConfigError("vehicle mass must be positive")
        if self.tau_a <= 0:
            raise ConfigError("actuation lag must be positive")
        if self.phi_e < 1:
            raise ConfigError("equivalent inertial mass factor must be >= 1")

    @property
    def mass(self) -> float:
        return self.m0 + self.m_load


def road_load(v, slope, f0, f1, f2, mass, g=GRAVITY):
    """Rolling, aerodynamic and grade resistance (N)."""
    return f0 * np.cos(slope) + f1 * v + f2 * v * v + mass * g * np.sin(slope)


def wheel_to_vehicle(a_t, v, slope, f0, f1, f2, mass, phi_e, g=GRAVITY):
    """Vehicle acceleration from the lagged wheel acceleration.

    ``(F_t - F_r) / (phi_e m)`` with ``F_t = m a_t``, written so that zero
    road load and ``phi_e = 1`` return ``a_t`` bit for bit.
    """
    return (a_t - road_load(v, slope, f0, f1, f2, mass, g) / mass) / phi_e


def dynamics_nonlinear_step(a_lag, a_cmd, cfg: NonlinearDynamicsConfig, v_f, slope, dt):
    """One step of the driveline lag plus road loads; returns ``(a_f, new a_t)``."""
    a_t = lag_step(a_lag, a_cmd, lag_factor(cfg.tau_a, dt))
    a_f = wheel_to_vehicle(a_t, v_f, slope, cfg.f0, cfg.f1, cfg.f2, cfg.mass, cfg.phi_e, cfg.g)
    return a_f, a_t


# -- acceleration constraints -------------------------------------------------------

def constrain_none(a_f):
    return a_f


def constrain_constant(a_f, a_lb=CONSTANT_BOUNDS[0], a_ub=CONSTANT_BOUNDS[1]):
    if a_lb >= a_ub:
        raise ConfigError("lower acceleration bound must be below the upper bound")
    return np.minimum(np.maximum(a_f, a_lb), a_ub)


@dataclass(frozen=True)
class MfcCurves:
    """Speed-dependent acceleration (``a_ap``) and deceleration (``a_dp``) potentials.

    Piecewise-linear in speed, held constant outside the grid.
    """

    v: np.ndarray
    a_ap: np.ndarray
    a_dp: np.ndarray

    def __post_init__(self):
        for name in ("v", "a_ap", "a_dp"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.v) == len(self.a_ap) == len(self.a_dp) >= 1):
            raise ConfigError("MFC curve arrays must be non-empty and of equal length")
        if np.any(np.diff(self.v) <= 0):
            raise ConfigError("MFC speed grid must be strictly increasing")
        if np.any(self.a_ap <= 0) or np.any(self.a_dp >= 0):
            raise ConfigError("MFC curves need a_dp < 0 < a_ap everywhere")

    def bounds(self, v_f):
        return np.interp(v_f, self.v, self.a_dp), np.interp(v_f, self.v, self.a_ap)

    @classmethod
    def from_records(cls, records) -> MfcCurves:
        rows = sorted(records, key=lambda r: r["v"])
        return cls([r["v"] for r in rows], [r["a_ap"] for r in rows], [r["a_dp"] for r in rows])

    @classmethod
    def from_json(cls, path: str | Path) -> MfcCurves:
        with open(path) as fh:
            return cls.from_records(json.load(fh))

    @classmethod
    def default(cls) -> MfcCurves:
        text = resources.files("accfit").joinpath("data/mfc_default.json").read_text()
        return cls.from_records(json.loads(text))

    def to_records(self) -> list[dict]:
        return [{"v": float(v), "a_ap": float(ap), "a_dp": float(dp)}
                for v, ap, dp in zip(self.v, self.a_ap, self.a_dp)]


def constrain_mfc(a_f, v_f, curves: MfcCurves):
    lo, hi = curves.bounds(v_f)
    return np.minimum(np.maximum(a_f, lo), hi)


# -- perception delay ---------------------------------------------------------------

class DelayBuffer:
    """Ring buffer of perceived states on the simulation grid.

    Holds ``ceil(tau_max / dt) + 2`` samples so that any delay up to
    ``tau_max`` can be interpolated. ``width`` > 1 keeps one independent
    lane per simulated candidate; ``width=None`` stores plain floats.
    """

    _SNAP = 1e-9

    def __init__(self, tau_max: float, dt: float, width: int | None = None, t0: float = 0.0):
        if dt <= 0:
            raise ConfigError("time step must be positive")
        if np.any(np.asarray(tau_max) < 0):
            raise ConfigError("perception delay must be non-negative")
        self.dt = float(dt)
        self.t0 = float(t0)
        self.depth = int(math.ceil(float(np.max(tau_max)) / dt - self._SNAP)) + 2
        self.scalar = width is None
        self._lanes = np.arange(1 if width is None else int(width))
        self._ring = np.zeros((self.depth, 3, len(self._lanes)))
        self.count = 0

    @property
    def t_latest(self) -> float:
        if self.count == 0:
            raise StateError("delay buffer is empty")
        return self.t0 + (self.count - 1) * self.dt

    def push(self, st: PerceivedState) -> None:
        self._ring[self.count % self.depth] = np.array(
            [np.broadcast_to(x, self._lanes.shape) for x in st], dtype=float
        )
        self.count += 1

    def perceive(self, tau_p, t: float | None = None) -> PerceivedState:
        """State at time ``t - tau_p`` (``t`` defaults to the newest sample).

        Linear interpolation between bracketing samples; queries before the
        first sample return the first sample.
        """
        if self.count == 0:
            raise StateError("delay buffer is empty")
        if np.any(np.asarray(tau_p) < 0):
            raise ConfigError("perception delay must be non-negative")
        latest = self.count - 1
        if t is None:
            q = latest - np.asarray(tau_p, dtype=float) / self.dt
        else:
            q = (t - self.t0 - np.asarray(tau_p, dtype=float)) / self.dt
        q = np.broadcast_to(q, self._lanes.shape)
        near = np.rint(q)
        q = np.where(np.abs(q - near) < self._SNAP, near, q)
        if np.any(q > latest + self._SNAP):
            raise StateError("query time is ahead of the newest buffered sample")
        q = np.clip(q, 0.0, latest)
        lo = np.floor(q).astype(int)
        if np.any(lo < self.count - self.depth):
            raise StateError("query time has been evicted from the buffer")
        frac = q - lo
        hi = np.minimum(lo + 1, latest)
        a = self._ring[lo % self.depth, :, self._lanes]
        b = self._ring[hi % self.depth, :, self._lanes]
        frac = frac[:, None]
        out = np.where(frac == 0.0, a, a + (b - a) * frac)
        if self.scalar:
            return PerceivedState(*(float(x) for x in out[0]))
        return PerceivedState(out[:, 0], out[:, 1], out[:, 2])


def perceive(buffer: DelayBuffer, tau_p, t: float | None = None) -> PerceivedState:
    return buffer.perceive(tau_p, t)
