"""Calibration/validation experiment matrix, error normalisation and report tables.

An experiment is indexed by ``(vehicle, p_cal, p_val)``: parameters are
calibrated on ``vehicle`` in platoon ``p_cal`` and then used to simulate the
same vehicle in ``p_val``. ``p_cal == p_val`` marks a calibration run.

:func:`run_sweep` persists one JSON file per matrix row, so an interrupted
sweep resumes where it stopped, and :func:`write_reports` turns the rows into
the summary CSV files.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from accfit.calibration import (
    VEHICLE_TYPES,
    CalibrationData,
    OptimizerConfig,
    ParameterBounds,
    calibrate,
    replicate,
    vehicle_type,
)
from accfit.errors import AccfitError, ConfigError, DataError, DegenerateInputError
from accfit.gof import GofConfig, evaluate, mop_errors
from accfit.models import BASE_IDS, VARIANTS_PER_BASE, get_model
from accfit.simulator import PhysicsConfig, simulate_follower
from accfit.trajectory_data import PlatoonTrajectory

log = logging.getLogger(__name__)

CALIBRATION = "calibration"
VALIDATION = "validation"
MOP_COLUMNS = ("rmse_s", "rmse_v", "rmse_a")


@dataclass(frozen=True, order=True)
class ExperimentIndex:
    vehicle: str
    p_cal: str
    p_val: str

    @property
    def is_calibration(self) -> bool:
        return self.p_cal == self.p_val

    @property
    def calibration_index(self) -> ExperimentIndex:
        """The calibration run whose parameters this experiment uses."""
        return ExperimentIndex(self.vehicle, self.p_cal, self.p_cal)

    def stem(self, model_id: int, seed: int) -> str:
        return f"{model_id}_{self.vehicle}_{self.p_cal}_{self.p_val}_{seed}"


def dataset_vehicles(dataset: Mapping[str, PlatoonTrajectory]) -> list[str]:
    """Followers present in every platoon, in first-seen order."""
    order: list[str] = []
    for traj in dataset.values():
        for vid in traj.follower_ids:
            if vid not in order:
                order.append(vid)
    return [v for v in order if all(v in traj.follower_ids for traj in dataset.values())]


def build_matrix(
    dataset: Mapping[str, PlatoonTrajectory],
    mode: str,
    vehicles: Sequence[str] | None = None,
) -> list[ExperimentIndex]:
    """All calibration or validation experiments over ``dataset``.

    Raises:
        DataError: a requested vehicle is missing from some platoon.
        ConfigError: unknown ``mode``.
    """
    platoons = list(dataset)
    if vehicles is None:
        vehicles = dataset_vehicles(dataset)
    for vid in vehicles:
        missing = [p for p in platoons if vid not in dataset[p].follower_ids]
        if missing:
            raise DataError(f"vehicle {vid!r} is not a follower in platoons {missing}")
    if mode == CALIBRATION:
        return [ExperimentIndex(v, p, p) for v in vehicles for p in platoons]
    if mode == VALIDATION:
        return [ExperimentIndex(v, pc, pv) for v in vehicles for pc in platoons for pv in platoons if pc != pv]
    raise ConfigError(f"mode must be {CALIBRATION!r} or {VALIDATION!r}, got {mode!r}")


# -- aggregation --------------------------------------------------------------------

def normalize_errors(table):
    """Errors relative to the best model on each trajectory: ``(g - g_min) / g_min``.

    Args:
        table: trajectories on rows, models on columns (DataFrame or 2-D array).

    Raises:
        DataError: a trajectory lacks the value of some model.
        DegenerateInputError: some trajectory has a zero minimum error.
    """
    frame = table if isinstance(table, pd.DataFrame) else pd.DataFrame(np.asarray(table, dtype=float))
    values = frame.to_numpy(dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise DataError("expected a non-empty trajectories x models table")
    if np.isnan(values).any():
        raise DataError("every trajectory needs an error value for every model")
    low = values.min(axis=1, keepdims=True)
    if np.any(low == 0):
        raise DegenerateInputError("a trajectory has a zero minimum error; report raw values instead")
    out = (values - low) / low
    if isinstance(table, pd.DataFrame):
        return pd.DataFrame(out, index=frame.index, columns=frame.columns)
    return out


def collision_frequency(results: pd.DataFrame) -> pd.DataFrame:
    """Collisions per model over its validation runs."""
    grouped = results.groupby("model_id")["collision"]
    out = pd.DataFrame({
        "collisions": grouped.sum().astype(int),
        "runs": grouped.size(),
    })
    out["frequency"] = out["collisions"] / out["runs"]
    out["label"] = [f"{c}/{n}" for c, n in zip(out["collisions"], out["runs"])]
    return out.reset_index()


def percent_change(value, base):
    return (np.asarray(value, dtype=float) - base) / base * 100.0


def base_of(model_id: int) -> int:
    return BASE_IDS[(int(model_id) - 1) // VARIANTS_PER_BASE]


def _class_members(model_id: int) -> range:
    b = base_of(model_id)
    return range(b, b + VARIANTS_PER_BASE)


def _describe(values: pd.Series, prefix: str) -> dict:
    q1, med, q3 = values.quantile([0.25, 0.5, 0.75])
    return {f"{prefix}_median": med, f"{prefix}_mean": values.mean(),
            f"{prefix}_q1": q1, f"{prefix}_q3": q3, f"{prefix}_iqr": q3 - q1}


def _require_bases(model_ids: Iterable[int]) -> None:
    ids = set(model_ids)
    missing = sorted({base_of(m) for m in ids} - ids)
    if missing:
        raise DataError(f"summaries need the base models {missing}")


def _paired_variation(frame: pd.DataFrame, keys: list[str], columns: Sequence[str]) -> pd.DataFrame:
    """Per-experiment percent change of each column against the class base model."""
    base = frame[frame["model_id"].isin(BASE_IDS)][keys + ["model_id"] + list(columns)]
    base = base.rename(columns={"model_id": "base_id", **{c: f"{c}_base" for c in columns}})
    merged = frame.assign(base_id=frame["model_id"].map(base_of)).merge(base, on=keys + ["base_id"])
    for c in columns:
        merged[f"{c}_var_pct"] = percent_change(merged[c], merged[f"{c}_base"])
    return merged


def summarize_calibration(cal: pd.DataFrame) -> pd.DataFrame:
    """Per-model medians of normalised calibration errors and their change against the base model.

    ``cal`` holds one successful calibration per row with columns
    ``model_id, vehicle, p_cal, gof`` and the per-MoP RMSEs.
    """
    _require_bases(cal["model_id"])
    wide = cal.pivot_table(index=["vehicle", "p_cal"], columns="model_id", values="gof", aggfunc="first")
    rows = []
    try:
        norm = normalize_errors(wide.dropna())
    except DegenerateInputError:
        log.warning("zero calibration error on some trajectory; normalised columns left empty")
        norm = None
    paired = _paired_variation(cal, ["vehicle", "p_cal"], ("gof",) + MOP_COLUMNS)
    for mid in sorted(cal["model_id"].unique()):
        spec = get_model(int(mid))
        own = cal[cal["model_id"] == mid]
        row = {"model_id": int(mid), "base_id": base_of(mid), "base_model": spec.base_name,
               "label": spec.label, "experiments": len(own), "gof_median": own["gof"].median()}
        if norm is not None and mid in norm:
            row.update(_describe(norm[mid], "normalized"))
        mine = paired[paired["model_id"] == mid]
        for c in ("gof",) + MOP_COLUMNS:
            row[f"{c}_var_pct_median"] = mine[f"{c}_var_pct"].median()
        rows.append(row)
    out = pd.DataFrame(rows)
    if "normalized_median" in out:
        base_med = out.set_index("model_id")["normalized_median"]
        out["normalized_median_var_pct"] = [
            percent_change(m, base_med[b]) if base_med[b] != 0 else np.nan
            for m, b in zip(out["normalized_median"], out["base_id"])
        ]
    return out


def summarize_validation(val: pd.DataFrame) -> pd.DataFrame:
    """Per-model validation statistics.

    Error statistics use only the experiments that are collision-free for
    every model of the class present in ``val``; collision counts use all
    runs.
    """
    _require_bases(val["model_id"])
    keys = ["vehicle", "p_cal", "p_val"]
    freq = collision_frequency(val).set_index("model_id")
    val = val.assign(base_id=val["model_id"].map(base_of))
    # experiments where some class member collided or failed
    bad = val[val["collision"] | val["gof"].isna()][keys + ["base_id"]].drop_duplicates()
    clean = val.merge(bad.assign(_bad=True), on=keys + ["base_id"], how="left")
    clean = clean[clean["_bad"].isna()].drop(columns=["_bad", "base_id"])
    paired = _paired_variation(clean, keys, ("gof",) + MOP_COLUMNS)
    rows = []
    for mid in sorted(val["model_id"].unique()):
        spec = get_model(int(mid))
        own = clean[clean["model_id"] == mid]
        row = {"model_id": int(mid), "base_id": base_of(mid), "base_model": spec.base_name,
               "label": spec.label, "runs": int(freq.loc[mid, "runs"]),
               "collisions": int(freq.loc[mid, "collisions"]),
               "collision_label": freq.loc[mid, "label"], "clean_experiments": len(own)}
        row.update(_describe(own["gof"], "gof"))
        mine = paired[paired["model_id"] == mid]
        for c in ("gof",) + MOP_COLUMNS:
            row[f"{c}_var_pct_median"] = mine[f"{c}_var_pct"].median()
        rows.append(row)
    return pd.DataFrame(rows)


def summarize(table: pd.DataFrame, grouping: str = CALIBRATION) -> pd.DataFrame:
    """Dispatch to :func:`summarize_calibration` or :func:`summarize_validation`."""
    if grouping == CALIBRATION:
        return summarize_calibration(table)
    if grouping == VALIDATION:
        return summarize_validation(table)
    raise ConfigError(f"grouping must be {CALIBRATION!r} or {VALIDATION!r}")


# -- sweep ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    model_ids: tuple[int, ...]
    out_dir: Path
    gof: GofConfig = GofConfig()
    opt: OptimizerConfig = OptimizerConfig()
    replicates: int = 1
    seeds: tuple[int, ...] | None = None
    bounds_overrides: Mapping[str, Sequence[float]] = field(default_factory=dict)
    vehicles: tuple[str, ...] | None = None
    physics: PhysicsConfig | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "model_ids", tuple(int(m) for m in self.model_ids))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        for m in self.model_ids:
            get_model(m)
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


def bounds_for(vehicle: str, overrides: Mapping[str, Sequence[float]] | None = None) -> ParameterBounds:
    """Default bounds with the vehicle's road-load ranges when the vehicle type is known."""
    try:
        b = ParameterBounds.default(vehicle_type(vehicle))
    except ConfigError:
        b = ParameterBounds.default()
    return b.override(overrides) if overrides else b


def _write_row(path: Path, row: dict) -> None:
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(row, indent=2, sort_keys=True))
    os.replace(tmp, path)


def _read_row(path: Path) -> dict | None:
    try:
        return json.loads(path.read_text())
    except (OSError, ValueError):
        return None


def _row_header(model_id, idx: ExperimentIndex, seed: int, mode: str) -> dict:
    return {"model_id": model_id, "vehicle": idx.vehicle, "p_cal": idx.p_cal, "p_val": idx.p_val,
            "seed": seed, "mode": mode}


def run_calibration_row(dataset, model_id: int, idx: ExperimentIndex, cfg: SweepConfig) -> dict:
    """Calibrate one model on one trajectory; failures become a ``status="failed"`` row."""
    row = _row_header(model_id, idx, cfg.opt.seed, CALIBRATION)
    try:
        spec = get_model(model_id)
        data = CalibrationData.from_platoon(dataset[idx.p_cal], idx.vehicle)
        bounds = bounds_for(idx.vehicle, cfg.bounds_overrides)
        if cfg.replicates > 1:
            res = replicate(data, spec, bounds, cfg.gof, cfg.opt, cfg.replicates, cfg.seeds, cfg.physics)
        else:
            res = calibrate(data, spec, bounds, cfg.gof, cfg.opt, cfg.physics)
    except AccfitError as exc:
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return row
    row.update(status="ok", params=res.params, gof=res.objective, collision=False,
               evaluations=res.evaluations, generations=res.generations,
               replicate_objectives=res.replicate_objectives, replicate_seeds=res.replicate_seeds,
               cv=res.cv, **res.errors)
    return row


def run_validation_row(dataset, model_id: int, idx: ExperimentIndex, cal_row: Mapping,
                       cfg: SweepConfig) -> dict:
    """Simulate ``idx.p_val`` with the parameters of its calibration row."""
    row = _row_header(model_id, idx, cfg.opt.seed, VALIDATION)
    row["calibrated_on"] = idx.calibration_index.stem(model_id, cfg.opt.seed)
    if cal_row.get("status") != "ok":
        row.update(status="failed", error=f"calibration {row['calibrated_on']} did not succeed")
        return row
    if (cal_row["model_id"], cal_row["vehicle"], cal_row["p_cal"], cal_row["p_val"]) != (
            model_id, idx.vehicle, idx.p_cal, idx.p_cal):
        raise DataError(f"parameter provenance mismatch for {idx.stem(model_id, cfg.opt.seed)}")
    params = dict(cal_row["params"])
    row["params"] = params
    try:
        spec = get_model(model_id)
        data = CalibrationData.from_platoon(dataset[idx.p_val], idx.vehicle)
        sim = simulate_follower(data.leader, data.init, spec, params, data.length, data.slope, cfg.physics)
    except AccfitError as exc:
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return row
    if sim.collision is not None:
        row.update(status="ok", collision=True, collision_time=sim.collision.time, gof=None,
                   **{c: None for c in MOP_COLUMNS})
        return row
    obs = data.observed
    row.update(status="ok", collision=False, gof=float(evaluate(sim, obs, cfg.gof)), **mop_errors(sim, obs))
    return row


def _calibration_task(args):
    dataset, model_id, idx, cfg = args
    return run_calibration_row(dataset, model_id, idx, cfg)


def _validation_task(args):
    dataset, model_id, idx, cal_row, cfg = args
    return run_validation_row(dataset, model_id, idx, cal_row, cfg)


def _execute(fn, tasks, workers):
    if workers == 1 or len(tasks) <= 1:
        for t in tasks:
            yield fn(t)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, tasks)


def run_sweep(
    dataset: Mapping[str, PlatoonTrajectory],
    cfg: SweepConfig,
    validate: bool = True,
) -> dict[str, pd.DataFrame]:
    """Run (or resume) the calibration matrix and, optionally, the validation matrix.

    Rows already on disk with ``status="ok"`` are reused; failed rows are
    retried. Returns ``{"calibration": frame, "validation": frame}``.
    """
    out = cfg.out_dir / "runs"
    out.mkdir(parents=True, exist_ok=True)
    vehicles = list(cfg.vehicles) if cfg.vehicles else None
    seed = cfg.opt.seed

    def pending(mode, indices):
        done, remaining = {}, []
        for mid in cfg.model_ids:
            for idx in indices:
                path = out / f"{idx.stem(mid, seed)}.json"
                row = _read_row(path)
                if row is not None and row.get("status") == "ok":
                    done[(mid, idx)] = row
                else:
                    remaining.append((mid, idx))
        log.info("%s: %d rows done, %d to run", mode, len(done), len(remaining))
        return done, remaining

    cal_idx = build_matrix(dataset, CALIBRATION, vehicles)
    cal_rows, remaining = pending(CALIBRATION, cal_idx)
    tasks = [(dataset, mid, idx, cfg) for mid, idx in remaining]
    for (mid, idx), row in zip(remaining, _execute(_calibration_task, tasks, cfg.workers)):
        _write_row(out / f"{idx.stem(mid, seed)}.json", row)
        cal_rows[(mid, idx)] = row
    result = {CALIBRATION: rows_to_frame(cal_rows.values())}

    if validate and len(dataset) > 1:
        val_idx = build_matrix(dataset, VALIDATION, vehicles)
        val_rows, remaining = pending(VALIDATION, val_idx)
        tasks = [(dataset, mid, idx, cal_rows[(mid, idx.calibration_index)], cfg) for mid, idx in remaining]
        for (mid, idx), row in zip(remaining, _execute(_validation_task, tasks, cfg.workers)):
            _write_row(out / f"{idx.stem(mid, seed)}.json", row)
            val_rows[(mid, idx)] = row
        result[VALIDATION] = rows_to_frame(val_rows.values())
    return result


def rows_to_frame(rows: Iterable[Mapping]) -> pd.DataFrame:
    columns = ["model_id", "vehicle", "p_cal", "p_val", "seed", "mode", "status", "gof",
               *MOP_COLUMNS, "collision", "cv", "error"]
    frame = pd.DataFrame([{c: r.get(c) for c in columns} for r in rows], columns=columns)
    for c in ("gof", *MOP_COLUMNS, "cv"):
        frame[c] = pd.to_numeric(frame[c], errors="coerce")
    frame["collision"] = frame["collision"].map(lambda c: bool(c) if c is not None and c == c else False).astype(bool)
    return frame.sort_values(["model_id", "vehicle", "p_cal", "p_val"], kind="stable").reset_index(drop=True)


def load_rows(out_dir: str | Path, seed: int | None = None) -> dict[str, pd.DataFrame]:
    """Collect the per-row JSON files of a sweep directory."""
    rows = {CALIBRATION: [], VALIDATION: []}
    for path in sorted((Path(out_dir) / "runs").glob("*.json")):
        row = _read_row(path)
        if row is None or (seed is not None and row.get("seed") != seed):
            continue
        rows[row["mode"]].append(row)
    return {mode: rows_to_frame(r) for mode, r in rows.items()}


def write_reports(out_dir: str | Path, frames: Mapping[str, pd.DataFrame] | None = None) -> dict[str, Path]:
    """Write the summary CSV files next to the run directory and return their paths."""
    out_dir = Path(out_dir)
    frames = frames if frames is not None else load_rows(out_dir)
    paths = {}
    cal = frames.get(CALIBRATION, pd.DataFrame())
    cal_ok = cal[cal["status"] == "ok"] if len(cal) else cal
    if len(cal_ok):
        paths["calibration_summary"] = out_dir / "calibration_summary.csv"
        summarize_calibration(cal_ok).to_csv(paths["calibration_summary"], index=False)
        paths["cv_distribution"] = out_dir / "cv_distribution.csv"
        cal_ok[["model_id", "vehicle", "p_cal", "gof", "cv"]].to_csv(paths["cv_distribution"], index=False)
    val = frames.get(VALIDATION, pd.DataFrame())
    val_ok = val[val["status"] == "ok"] if len(val) else val
    if len(val_ok):
        paths["validation_summary"] = out_dir / "validation_summary.csv"
        summarize_validation(val_ok).to_csv(paths["validation_summary"], index=False)
        paths["collision_frequency"] = out_dir / "collision_frequency.csv"
        collision_frequency(val_ok).to_csv(paths["collision_frequency"], index=False)
    return paths


__all__ = [
    "CALIBRATION",
    "VALIDATION",
    "ExperimentIndex",
    "SweepConfig",
    "VEHICLE_TYPES",
    "bounds_for",
    "build_matrix",
    "collision_frequency",
    "dataset_vehicles",
    "load_rows",
    "normalize_errors",
    "run_sweep",
    "summarize",
    "summarize_calibration",
    "summarize_validation",
    "write_reports",
]
