"""Platoon trajectory containers, CSV ingestion and consistency processing.

Positions are front-bumper longitudinal coordinates along the road (m),
speeds in m/s, accelerations in m/s^2, road grade in rad.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from accfit.errors import DataError, DataFormatError

DEFAULT_VEHICLE_LENGTH = 5.0
GRID_JITTER = 1e-6


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class KinematicSeries:
    """Time-indexed kinematics of one vehicle on a uniform grid.

    ``a`` may be ``None`` for freshly loaded data until
    :func:`derive_consistent` fills it in.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "t", _frozen(self.t))
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "v", _frozen(self.v))
        if self.a is not None:
            object.__setattr__(self, "a", _frozen(self.a))
        n = len(self.t)
        if n < 2:
            raise DataFormatError("a series needs at least 2 samples")
        channels = [self.x, self.v] + ([self.a] if self.a is not None else [])
        if any(len(c) != n for c in channels):
            raise DataFormatError("t, x, v and a must have equal length")
        if np.any(np.diff(self.t) <= 0):
            raise DataFormatError("time must be strictly increasing")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def __len__(self) -> int:
        return len(self.t)

    def head(self, n: int) -> KinematicSeries:
        """First ``n`` samples."""
        a = None if self.a is None else self.a[:n]
        return KinematicSeries(self.t[:n], self.x[:n], self.v[:n], a)


@dataclass(frozen=True)
class Vehicle:
    vehicle_id: str
    length: float
    series: KinematicSeries


@dataclass(frozen=True)
class PlatoonTrajectory:
    """Leader (index 0) followed by its followers in physical order."""

    platoon_id: str
    vehicles: tuple[Vehicle, ...]
    dt: float
    slope: np.ndarray | None = None
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        if len(self.vehicles) < 1:
            raise DataFormatError("platoon has no vehicles")
        t0 = self.vehicles[0].series.t
        for veh in self.vehicles[1:]:
            if len(veh.series.t) != len(t0) or not np.allclose(veh.series.t, t0, rtol=0, atol=GRID_JITTER):
                raise DataFormatError(f"vehicle {veh.vehicle_id} is not on the platoon time grid")
        if self.slope is not None:
            object.__setattr__(self, "slope", _frozen(self.slope))
            if len(self.slope) != len(t0):
                raise DataFormatError("slope channel length differs from the time grid")
        for i in range(1, len(self.vehicles)):
            s = self.spacing(i)
            if np.any(s <= 0):
                k = int(np.argmax(s <= 0))
                raise DataError(
                    f"platoon {self.platoon_id}: non-positive spacing for "
                    f"{self.vehicles[i].vehicle_id} at t={t0[k]:.3f}s"
                )

    @property
    def t(self) -> np.ndarray:
        return self.vehicles[0].series.t

    @property
    def leader(self) -> Vehicle:
        return self.vehicles[0]

    @property
    def follower_ids(self) -> list[str]:
        return [v.vehicle_id for v in self.vehicles[1:]]

    def index_of(self, vehicle_id: str) -> int:
        for i, veh in enumerate(self.vehicles):
            if veh.vehicle_id == vehicle_id:
                return i
        raise KeyError(f"vehicle {vehicle_id!r} not in platoon {self.platoon_id}")

    def spacing(self, i: int) -> np.ndarray:
        """Spacing between vehicle ``i`` and its predecessor (predecessor length subtracted)."""
        if i < 1:
            raise ValueError("the platoon leader has no predecessor")
        lead = self.vehicles[i - 1]
        return spacing_series(lead.series, self.vehicles[i].series, lead.length)

    def slope_or_zero(self) -> np.ndarray:
        if self.slope is None:
            return np.zeros(len(self.t))
        return np.asarray(self.slope)


def spacing_series(leader: KinematicSeries, follower: KinematicSeries, length: float) -> np.ndarray:
    """Pointwise ``x_leader - x_follower - length``."""
    if len(leader.t) != len(follower.t) or not np.allclose(leader.t, follower.t, rtol=0, atol=GRID_JITTER):
        raise ValueError("leader and follower are not on the same time grid")
    return leader.x - follower.x - length


def decimate(traj: PlatoonTrajectory, factor: int) -> PlatoonTrajectory:
    """Keep every ``factor``-th sample starting at index 0 (no anti-alias filter)."""
    if not isinstance(factor, (int, np.integer)) or factor <= 0:
        raise ValueError(f"decimation factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return traj
    n = len(traj.t)
    if n <= factor:
        raise ValueError(f"series of length {n} too short for decimation by {factor}")
    sel = slice(0, None, factor)
    vehicles = []
    for veh in traj.vehicles:
        s = veh.series
        a = None if s.a is None else s.a[sel]
        vehicles.append(replace(veh, series=KinematicSeries(s.t[sel], s.x[sel], s.v[sel], a)))
    slope = None if traj.slope is None else traj.slope[sel]
    return replace(traj, vehicles=tuple(vehicles), dt=traj.dt * factor, slope=slope)


def consistent_series(series: KinematicSeries) -> KinematicSeries:
    """Rebuild ``a`` and ``x`` from ``v`` with the ballistic update scheme."""
    v = np.asarray(series.v, dtype=float)
    if np.any(v < 0):
        k = int(np.argmax(v < 0))
        raise DataError(f"negative speed {v[k]:.4f} m/s at t={series.t[k]:.3f}s")
    dt = series.dt
    a = np.empty_like(v)
    a[0] = 0.0
    a[1:] = (v[1:] - v[:-1]) / dt
    x = np.empty_like(v)
    x[0] = series.x[0]
    x[1:] = x[0] + np.cumsum((v[1:] + v[:-1]) / 2.0 * dt)
    return KinematicSeries(series.t, x, v, a)


def derive_consistent(traj: PlatoonTrajectory) -> PlatoonTrajectory:
    """Make every vehicle's (x, v, a) satisfy the ballistic scheme exactly.

    Speed is treated as the measured channel: accelerations are backward
    differences (zero at the first sample) and positions are re-integrated
    with the trapezoid rule from the first observed position.
    """
    vehicles = tuple(replace(veh, series=consistent_series(veh.series)) for veh in traj.vehicles)
    return replace(traj, vehicles=vehicles)


# ---------------------------------------------------------------------------
# CSV I/O


def default_schema(header: Sequence[str]) -> dict:
    """Infer the column map from a ``time, <id>_x, <id>_v[, <id>_a][, slope]`` header."""
    if "time" not in header:
        raise DataFormatError("missing 'time' column", line=1)
    vehicles = []
    for col in header:
        if col.endswith("_x"):
            vid = col[:-2]
            if f"{vid}_v" not in header:
                raise DataFormatError(f"column {vid}_x has no matching {vid}_v", line=1)
            entry = {"id": vid, "x": col, "v": f"{vid}_v"}
            if f"{vid}_a" in header:
                entry["a"] = f"{vid}_a"
            vehicles.append(entry)
    if not vehicles:
        raise DataFormatError("no '<id>_x' vehicle columns found", line=1)
    return {"time": "time", "vehicles": vehicles, "slope": "slope" if "slope" in header else None}


def load_schema(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_platoon(
    path: str | Path,
    schema: Mapping | str | Path | None = None,
    lengths: Mapping[str, float] | None = None,
    platoon_id: str | None = None,
) -> PlatoonTrajectory:
    """Read a platoon CSV file.

    Args:
        path: CSV file with a header row.
        schema: column map (dict or JSON file). Keys: ``time``; ``vehicles``,
            a list in physical order of ``{"id", "x", "v", optional "a",
            optional "length"}``; optional ``slope``. Inferred from the
            header when omitted.
        lengths: vehicle lengths by id, overriding the schema.
        platoon_id: label; defaults to the file stem.

    Returns:
        The platoon on a uniform time grid. Acceleration channels not present
        in the file are left unset.

    Raises:
        DataFormatError: malformed rows (with line number) or a time grid
            whose steps deviate by more than 1e-6 s.
    """
    path = Path(path)
    if isinstance(schema, (str, Path)):
        schema = load_schema(schema)
    lengths = dict(lengths or {})
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("empty file", line=1) from None
        if schema is None:
            schema = default_schema(header)
        columns = {name: i for i, name in enumerate(header)}
        wanted = [schema["time"]]
        for veh in schema["vehicles"]:
            wanted += [veh["x"], veh["v"]] + ([veh["a"]] if veh.get("a") else [])
        if schema.get("slope"):
            wanted.append(schema["slope"])
        missing = [c for c in wanted if c not in columns]
        if missing:
            raise DataFormatError(f"missing columns {missing}", line=1)
        idx = [columns[c] for c in wanted]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                values = [float(row[i]) for i in idx]
            except ValueError as exc:
                raise DataFormatError(f"unparseable number ({exc})", line=lineno) from None
            if not all(math.isfinite(x) for x in values):
                raise DataFormatError("non-finite value", line=lineno)
            rows.append(values)
    if len(rows) < 2:
        raise DataFormatError("need at least two data rows")
    data = np.array(rows)
    t = data[:, 0]
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if dt <= 0 or np.max(np.abs(steps - dt)) > GRID_JITTER:
        k = int(np.argmax(np.abs(steps - dt))) if dt > 0 else 0
        raise DataFormatError(
            f"non-uniform time grid: step {steps[k]:.6g}s vs mean {dt:.6g}s", line=k + 3
        )
    t = t[0] + dt * np.arange(len(t))
    col = 1
    vehicles = []
    defaulted = []
    for veh in schema["vehicles"]:
        x, v = data[:, col], data[:, col + 1]
        col += 2
        a = None
        if veh.get("a"):
            a = data[:, col]
            col += 1
        vid = str(veh["id"])
        if vid in lengths:
            length = float(lengths[vid])
        elif veh.get("length") is not None:
            length = float(veh["length"])
        else:
            length = DEFAULT_VEHICLE_LENGTH
            defaulted.append(vid)
        vehicles.append(Vehicle(vid, length, KinematicSeries(t, x, v, a)))
    slope = data[:, col] if schema.get("slope") else None
    meta = {"source": str(path), "default_length": defaulted}
    return PlatoonTrajectory(platoon_id or path.stem, tuple(vehicles), float(dt), slope, meta)


def write_platoon(traj: PlatoonTrajectory, path: str | Path) -> None:
    """Write a platoon in the default CSV dialect read by :func:`load_platoon`."""
    header = ["time"]
    cols = [traj.t]
    for veh in traj.vehicles:
        s = veh.series
        header += [f"{veh.vehicle_id}_x", f"{veh.vehicle_id}_v"]
        cols += [s.x, s.v]
        if s.a is not None:
            header.append(f"{veh.vehicle_id}_a")
            cols.append(s.a)
    if traj.slope is not None:
        header.append("slope")
        cols.append(traj.slope)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.column_stack(cols):
            writer.writerow([repr(float(x)) for x in row])
