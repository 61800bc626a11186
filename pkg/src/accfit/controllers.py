"""Upper-level controllers: IDM, Gipps and the linear law with three spacing policies.

Every function accepts floats or equally shaped numpy arrays, so the same
code evaluates one vehicle or a whole optimizer population at once.
Parameter sets are plain mappings using these names:

=========  ======================================  =======
name       meaning                                 unit
=========  ======================================  =======
delta      IDM free-road exponent                  -
v0         set (desired) speed                     m/s
d0         standstill spacing                      m
th         time headway / Gipps reaction time      s
a_max      maximum acceleration                    m/s^2
a_min      comfortable deceleration (negative)     m/s^2
a_min_hat  leader deceleration estimate (neg.)     m/s^2
theta      Gipps safety margin delay               s
ks, kv, k0 linear gains on spacing, speed diff.,   1/s^2, 1/s, 1/s
           and set-speed error
=========  ======================================  =======
"""

from __future__ import annotations

from typing import Callable, Mapping, NamedTuple

import numpy as np

from accfit.errors import DomainError
from accfit.models import Controller, ModelSpec, SpacingPolicy

Params = Mapping[str, "float | np.ndarray"]


class PerceivedState(NamedTuple):
    """Ego speed, spacing to the leader and relative speed ``v_leader - v_ego``."""

    v_f: float | np.ndarray
    s: float | np.ndarray
    dv: float | np.ndarray


def _check_spacing(s):
    if np.any(np.asarray(s) <= 0):
        raise DomainError("spacing must be positive")


# -- spacing policies ---------------------------------------------------------

def spacing_cth(v_f, p: Params):
    return p["d0"] + p["th"] * v_f


def spacing_idm(v_f, dv, p: Params):
    """IDM desired spacing; the max(0, .) guard can leave just ``d0``."""
    dynamic = p["th"] * v_f - v_f * dv / (2.0 * np.sqrt(-p["a_max"] * p["a_min"]))
    return p["d0"] + np.maximum(0.0, dynamic)


def spacing_gipps_eq(v_f, p: Params):
    """Equilibrium distance-speed relation of Gipps' model."""
    return (p["d0"] + (p["th"] + p["theta"]) * v_f
            - 0.5 * v_f * v_f * (1.0 / p["a_min"] - 1.0 / p["a_min_hat"]))


def desired_spacing(st: PerceivedState, p: Params, policy: SpacingPolicy):
    policy = SpacingPolicy(policy)
    if policy is SpacingPolicy.CTH:
        return spacing_cth(st.v_f, p)
    if policy is SpacingPolicy.IDM:
        return spacing_idm(st.v_f, st.dv, p)
    if policy is SpacingPolicy.GIPPS:
        return spacing_gipps_eq(st.v_f, p)
    raise ValueError(f"{policy.value} is not a linear-controller spacing policy")


# -- command laws (unchecked kernels used by the simulator) ---------------------

def _idm(st: PerceivedState, p: Params):
    s_des = spacing_idm(st.v_f, st.dv, p)
    return p["a_max"] * (1.0 - (st.v_f / p["v0"]) ** p["delta"] - (s_des / st.s) ** 2)


def gipps_speeds(st: PerceivedState, p: Params):
    """Free-flow and car-following planned speeds one reaction time ahead.

    The car-following branch uses the leader speed ``v_f + dv``. Where no
    real root exists the branch plans a full stop (speed 0).
    """
    v, th, v0 = st.v_f, p["th"], p["v0"]
    ratio = v / v0
    v_free = v + 2.5 * p["a_max"] * th * (1.0 - ratio) * np.sqrt(0.025 + ratio)
    b = p["a_min"]
    c = th / 2.0 + p["theta"]
    v_lead = v + st.dv
    radicand = b * b * c * c - b * (2.0 * (st.s - p["d0"]) - th * v - v_lead * v_lead / p["a_min_hat"])
    root = np.sqrt(np.maximum(radicand, 0.0))
    v_cf = np.where(radicand >= 0.0, b * c + root, 0.0)
    return v_free, v_cf


def _gipps(st: PerceivedState, p: Params):
    v_free, v_cf = gipps_speeds(st, p)
    v_cmd = np.maximum(np.minimum(v_free, v_cf), 0.0)
    return (v_cmd - st.v_f) / p["th"]


def _linear(st: PerceivedState, p: Params, policy: SpacingPolicy):
    s_des = desired_spacing(st, p, policy)
    return np.minimum(p["kv"] * st.dv - p["ks"] * (s_des - st.s), p["k0"] * (p["v0"] - st.v_f))


# -- public, checked entry points ---------------------------------------------

def idm_command(st: PerceivedState, p: Params):
    """IDM acceleration command ``a_max (1 - (v/v0)^delta - (s_des/s)^2)``."""
    _check_spacing(st.s)
    return _idm(st, p)


def gipps_command(st: PerceivedState, p: Params):
    """Gipps command: (planned speed - current speed) / th, planned speed >= 0."""
    _check_spacing(st.s)
    return _gipps(st, p)


def linear_command(st: PerceivedState, p: Params, policy: SpacingPolicy | str):
    """``min(kv dv - ks (s_des - s), k0 (v0 - v))`` for the given spacing policy."""
    return _linear(st, p, SpacingPolicy(policy))


def command_law(spec: ModelSpec) -> Callable[[PerceivedState, Params], "float | np.ndarray"]:
    """Unchecked command function for ``spec``'s base controller."""
    if spec.controller is Controller.IDM:
        return _idm
    if spec.controller is Controller.GIPPS:
        return _gipps
    policy = spec.spacing_policy
    return lambda st, p: _linear(st, p, policy)


def equilibrium_spacing(spec: ModelSpec, v: float, p: Params) -> float:
    """Spacing at which a follower at constant speed ``v`` behind an equal-speed leader holds still."""
    if spec.controller is Controller.IDM:
        s_des = spacing_idm(v, 0.0, p)
        free = 1.0 - (v / p["v0"]) ** p["delta"]
        if free <= 0:
            raise DomainError("no IDM equilibrium at or above the set speed")
        return float(s_des / np.sqrt(free))
    if spec.controller is Controller.GIPPS:
        return float(spacing_gipps_eq(v, p))
    return float(desired_spacing(PerceivedState(v, 1.0, 0.0), p, spec.spacing_policy))
