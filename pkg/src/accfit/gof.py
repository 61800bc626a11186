"""Goodness-of-fit measures between simulated and observed spacing, speed and acceleration.

All functions reduce over the last axis, so they accept a single series or
a ``(n, T)`` stack with one start index per row.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from accfit.errors import DegenerateInputError

DEFAULT_PENALTY = 1e10


class GofKind(str, Enum):
    RMSE_S = "rmse_s"
    RMSE_V = "rmse_v"
    THEIL_U_SV = "theil_u_sv"
    THEIL_U_SVA = "theil_u_sva"
    NRMSE_SV = "nrmse_sv"
    NRMSE_SVA = "nrmse_sva"


@dataclass(frozen=True)
class GofConfig:
    """Objective selection.

    ``start_index=None`` defers to the simulation's own start index (end of
    the perception-delay window); an explicit value is used as a floor.
    """

    kind: GofKind = GofKind.NRMSE_SVA
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    start_index: int | None = None
    penalty: float = DEFAULT_PENALTY

    def __post_init__(self):
        object.__setattr__(self, "kind", GofKind(self.kind))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ValueError("weights must be three non-negative numbers")
        if self.start_index is not None and self.start_index < 0:
            raise ValueError("start_index must be non-negative")


class MoP(NamedTuple):
    """Measures of performance: spacing, speed, acceleration."""

    s: np.ndarray
    v: np.ndarray
    a: np.ndarray


def _window(sim, obs, start):
    sim = np.asarray(sim, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if sim.shape[-1] != obs.shape[-1]:
        raise ValueError(f"length mismatch: simulated {sim.shape[-1]} vs observed {obs.shape[-1]}")
    T = sim.shape[-1]
    start = np.asarray(start)
    if np.any(start < 0) or np.any(start >= T):
        raise ValueError(f"start index must lie in [0, {T})")
    mask = np.arange(T) >= start[..., None] if start.ndim else np.arange(T) >= start
    count = mask.sum(axis=-1)
    return sim, obs, mask, count


def _mean_square(values, mask, count):
    return np.where(mask, values * values, 0.0).sum(axis=-1) / count


def rmse(sim, obs, start=0):
    """Root mean square of ``sim - obs`` over samples ``start..T-1``."""
    sim, obs, mask, count = _window(sim, obs, start)
    with np.errstate(invalid="ignore"):
        return np.sqrt(_mean_square(sim - obs, mask, count))


def rms(values, start=0):
    values = np.asarray(values, dtype=float)
    return rmse(values, np.zeros_like(values), start)


def nrmse(sim, obs, start=0):
    """RMSE divided by the RMS level of the observation over the same window."""
    level = rms(obs, start)
    if np.any(level == 0):
        raise DegenerateInputError("observed series is identically zero over the compared window")
    return rmse(sim, obs, start) / level


def theil_u(sim, obs, start=0):
    """Inequality coefficient ``RMSE / (RMS(sim) + RMS(obs))``, in [0, 1]."""
    denom = rms(sim, start) + rms(obs, start)
    if np.any(denom == 0):
        raise DegenerateInputError("both series are identically zero over the compared window")
    return rmse(sim, obs, start) / denom


def theil_u_multi(channels: Sequence[tuple], start=0):
    """Unweighted sum of per-channel Theil's U; ``channels`` holds ``(sim, obs)`` pairs."""
    return sum(theil_u(sim, obs, start) for sim, obs in channels)


def nrmse_sva(sim, obs, weights=(1.0, 1.0, 1.0), start=None):
    """Weighted sum of spacing, speed and acceleration NRMSE.

    ``sim`` and ``obs`` expose ``s``, ``v`` and ``a`` (a :class:`MoP` or a
    simulation result). ``start`` defaults to ``sim.gof_start_index``.
    """
    if start is None:
        start = getattr(sim, "gof_start_index", 0)
    b0, b1, b2 = weights
    return (b0 * nrmse(sim.s, obs.s, start)
            + b1 * nrmse(sim.v, obs.v, start)
            + b2 * nrmse(sim.a, obs.a, start))


def evaluate(sim, obs, cfg: GofConfig, start=None):
    """The configured GoF, without collision handling."""
    if start is None:
        start = getattr(sim, "gof_start_index", 0)
    if cfg.start_index is not None:
        start = np.maximum(start, cfg.start_index)
    kind = cfg.kind
    if kind is GofKind.RMSE_S:
        return rmse(sim.s, obs.s, start)
    if kind is GofKind.RMSE_V:
        return rmse(sim.v, obs.v, start)
    if kind is GofKind.THEIL_U_SV:
        return theil_u_multi([(sim.s, obs.s), (sim.v, obs.v)], start)
    if kind is GofKind.THEIL_U_SVA:
        return theil_u_multi([(sim.s, obs.s), (sim.v, obs.v), (sim.a, obs.a)], start)
    if kind is GofKind.NRMSE_SV:
        b0, b1, _ = cfg.weights
        return b0 * nrmse(sim.s, obs.s, start) + b1 * nrmse(sim.v, obs.v, start)
    return nrmse_sva(sim, obs, cfg.weights, start)


def penalized_objective(sim, obs, cfg: GofConfig = GofConfig(), penalty_value: float | None = None):
    """Configured GoF, or a flat penalty when the simulation collided."""
    penalty = cfg.penalty if penalty_value is None else penalty_value
    if getattr(sim, "collision", None) is not None:
        return float(penalty)
    return float(evaluate(sim, obs, cfg))


def mop_errors(sim, obs, start=None) -> dict:
    """Per-MoP RMSE and NRMSE breakdown."""
    if start is None:
        start = getattr(sim, "gof_start_index", 0)
    out = {}
    for ch in ("s", "v", "a"):
        out[f"rmse_{ch}"] = float(rmse(getattr(sim, ch), getattr(obs, ch), start))
        out[f"nrmse_{ch}"] = float(nrmse(getattr(sim, ch), getattr(obs, ch), start))
    return out
