"""Command-line entry point: ``accfit <subcommand> ...``.

Subcommands:
    simulate   simulate one follower of a recorded platoon with given parameters
    calibrate  calibrate one model on one follower
    sweep      run (or resume) the calibration matrix from a JSON config
    validate   run (or resume) calibration and validation matrices from a JSON config
    report     write summary CSV files from a sweep directory
    synth      write a synthetic platoon dataset (one CSV per platoon)
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from accfit.calibration import CalibrationData, OptimizerConfig, calibrate, replicate
from accfit.errors import AccfitError
from accfit.experiments import SweepConfig, bounds_for, run_sweep, write_reports
from accfit.gof import GofConfig, GofKind
from accfit.models import get_model
from accfit.physics import MfcCurves
from accfit.simulator import PhysicsConfig, sim_to_rows, simulate_follower
from accfit.trajectory_data import PlatoonTrajectory, decimate, derive_consistent, load_platoon, write_platoon

log = logging.getLogger("accfit")


def _read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_dataset_file(data: str | Path, platoon: str, schema=None, lengths=None, factor: int = 1) -> PlatoonTrajectory:
    """Load ``data`` (a CSV file, or a directory holding ``<platoon>.csv``)."""
    path = Path(data)
    if path.is_dir():
        path = path / f"{platoon}.csv"
    traj = load_platoon(path, schema=schema, lengths=lengths, platoon_id=platoon)
    if factor > 1:
        traj = decimate(traj, factor)
    return traj


def physics_from_config(cfg: dict | None, base: Path = Path(".")) -> PhysicsConfig | None:
    if not cfg:
        return None
    kw = {k: cfg[k] for k in ("m0", "phi_e", "g") if k in cfg}
    if "accel_bounds" in cfg:
        kw["accel_bounds"] = tuple(cfg["accel_bounds"])
    if "mfc" in cfg:
        mfc = cfg["mfc"]
        kw["mfc"] = MfcCurves.from_records(mfc) if isinstance(mfc, list) else MfcCurves.from_json(base / mfc)
    return PhysicsConfig(**kw)


def gof_from_args(kind: str | None, weights=None) -> GofConfig:
    kw = {}
    if kind:
        kw["kind"] = GofKind(kind)
    if weights:
        kw["weights"] = tuple(weights)
    return GofConfig(**kw)


# -- single runs ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    traj = load_dataset_file(args.data, args.platoon, args.schema, factor=args.decimate)
    data = CalibrationData.from_platoon(derive_consistent(traj), args.follower)
    spec = get_model(args.model_id)
    params = _read_json(args.params)
    res = simulate_follower(data.leader, data.init, spec, params, data.length, data.slope)
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["t", "x", "v", "a", "a_cmd", "s"])
        writer.writeheader()
        writer.writerows(sim_to_rows(res))
    summary = {
        "model_id": spec.model_id,
        "collision": None if res.collision is None else {"index": res.collision.index, "time": res.collision.time},
        "gof_start_index": res.gof_start_index,
        "samples": len(res.t),
    }
    out.with_suffix(".json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))
    return 0


def cmd_calibrate(args) -> int:
    traj = load_dataset_file(args.data, args.platoon, args.schema, factor=args.decimate)
    data = CalibrationData.from_platoon(derive_consistent(traj), args.follower)
    spec = get_model(args.model_id)
    bounds = bounds_for(args.follower, _read_json(args.bounds) if args.bounds else None)
    opt_kw = {"seed": args.seed}
    if args.generations is not None:
        opt_kw["generations"] = args.generations
    if args.population is not None:
        opt_kw["population"] = args.population
    if args.no_polish:
        opt_kw["polish"] = False
    opt = OptimizerConfig(**opt_kw)
    gof = gof_from_args(args.gof)
    if args.replicates > 1:
        res = replicate(data, spec, bounds, gof, opt, n_replicates=args.replicates)
    else:
        res = calibrate(data, spec, bounds, gof, opt)
    text = res.dumps()
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


# -- experiment matrix ------------------------------------------------------------------

def sweep_from_config(path: str | Path):
    """Dataset and :class:`SweepConfig` from a JSON config file.

    Relative paths inside the file resolve against the file's directory.
    """
    path = Path(path)
    base = path.parent
    cfg = _read_json(path)
    ds_cfg = cfg["dataset"]
    ds_path = base / ds_cfg["path"]
    lengths = ds_cfg.get("lengths") or cfg.get("lengths")
    schema = ds_cfg.get("schema")
    if isinstance(schema, str):
        schema = base / schema
    platoons = ds_cfg.get("platoons") or sorted(p.stem for p in ds_path.glob("*.csv"))
    factor = int(ds_cfg.get("decimate", 1))
    dataset = {
        p: derive_consistent(load_dataset_file(ds_path, p, schema, lengths, factor)) for p in platoons
    }
    models = cfg.get("model_ids", "all")
    model_ids = tuple(range(1, 91)) if models == "all" else tuple(models)
    gof = cfg.get("gof", {})
    seeds = cfg.get("seeds")
    sweep = SweepConfig(
        model_ids=model_ids,
        out_dir=base / cfg.get("output_dir", "sweep_out"),
        gof=gof_from_args(gof.get("kind"), gof.get("weights")),
        opt=OptimizerConfig(**cfg.get("optimizer", {})),
        replicates=int(cfg.get("replicates", 1)),
        seeds=tuple(seeds) if seeds else None,
        bounds_overrides=cfg.get("bounds", {}),
        vehicles=tuple(cfg["vehicles"]) if cfg.get("vehicles") else None,
        physics=physics_from_config(cfg.get("physics"), base),
        workers=int(cfg.get("workers", 1)),
    )
    return dataset, sweep


def cmd_sweep(args, validate: bool = False) -> int:
    dataset, cfg = sweep_from_config(args.config)
    frames = run_sweep(dataset, cfg, validate=validate)
    for mode, frame in frames.items():
        failed = int((frame["status"] != "ok").sum())
        print(f"{mode}: {len(frame)} rows, {failed} failed")
    paths = write_reports(cfg.out_dir, frames)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.dir) if args.dir else sweep_from_config(args.config)[1].out_dir
    paths = write_reports(out_dir)
    if not paths:
        print(f"no completed rows under {out_dir}", file=sys.stderr)
        return 1
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def cmd_synth(args) -> int:
    from accfit.synthetic import synthetic_dataset

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for pid, traj in synthetic_dataset(args.seed, args.duration).items():
        write_platoon(traj, out / f"{pid}.csv")
        print(out / f"{pid}.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="accfit", description="ACC / car-following model simulation and calibration")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("--data", required=True, help="platoon CSV file, or a directory of <platoon>.csv files")
        p.add_argument("--platoon", required=True, help="platoon id")
        p.add_argument("--follower", required=True, help="follower vehicle id")
        p.add_argument("--model-id", type=int, required=True, help="model variant 1..90")
        p.add_argument("--schema", help="JSON column map for the CSV")
        p.add_argument("--decimate", type=int, default=1, help="keep every n-th sample")

    p = sub.add_parser("simulate", help="simulate one follower with given parameters")
    data_args(p)
    p.add_argument("--params", required=True, help="JSON object of parameter values")
    p.add_argument("--out", required=True, help="output CSV; a JSON summary is written alongside")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="calibrate one model on one follower")
    data_args(p)
    p.add_argument("--gof", choices=[k.value for k in GofKind], default=GofKind.NRMSE_SVA.value)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--bounds", help="JSON object of {name: [lower, upper]} overrides")
    p.add_argument("--generations", type=int)
    p.add_argument("--population", type=int)
    p.add_argument("--no-polish", action="store_true", help="skip the simplex refinement of the GA optimum")
    p.add_argument("--out", help="result JSON path")
    p.set_defaults(func=cmd_calibrate)

    for name, validate, text in (("sweep", False, "run the calibration matrix"),
                                 ("validate", True, "run calibration and validation matrices")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="sweep JSON config")
        p.set_defaults(func=lambda a, v=validate: cmd_sweep(a, validate=v))

    p = sub.add_parser("report", help="write summary CSVs for a sweep")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", help="sweep JSON config")
    g.add_argument("--dir", help="sweep output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic platoon dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=60.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (AccfitError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"accfit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
