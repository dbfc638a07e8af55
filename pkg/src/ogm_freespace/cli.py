"""Command line interface: build, freespace, simulate, bench, scenario."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .grid_map import normalize, write_pgm
from .logs import parse_odometry_log, polygon_record, write_odometry_log
from .pipeline import dump_config, load_config, run
from .scan_model import Pose2D, ScanLogError, parse_scan_log
from .simulate import (
    SensorSpec, SyntheticWorld, box_room, corridor, load_trajectory, simulate, straight_trajectory, write_outputs,
)

log = logging.getLogger("ogm_freespace")

# dedicated flags for the most common overrides; anything else goes through --set
FLAG_KEYS = {
    "resolution": float, "height": int, "width": int, "dp_epsilon": float, "dp_max_vertices": int,
    "opening_radius": int, "k_radius": float,
}


def _config(args):
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for key in FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    try:
        return load_config(args.config, overrides)
    except ValueError as exc:
        raise SystemExit(f"config error: {exc}")


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (repeatable)")
    for key, typ in FLAG_KEYS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ)


def _read_inputs(args):
    try:
        with open(args.scans, newline="") as fh:
            scans = parse_scan_log(fh, max_range=args.cfg.max_range, aperture_deg=args.cfg.aperture_deg)
        with open(args.odom, newline="") as fh:
            odom = parse_odometry_log(fh)
    except ScanLogError as exc:
        raise SystemExit(f"input error: {exc}")
    return scans, odom


def _process(args, snapshots: bool) -> int:
    cfg = args.cfg = _config(args)
    scans, odom = _read_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_used.cfg").write_text(dump_config(cfg))
    n = invalid = 0
    last = None
    with open(out / "polygons.jsonl", "w") as poly_fh:
        for k, (res, state) in enumerate(run(scans, odom, cfg)):
            poly_fh.write(polygon_record(res.timestamp, res.world_pose, res.local_pose,
                                         res.polygon.vertices, res.valid) + "\n")
            if snapshots and args.snapshot_every > 0 and k % args.snapshot_every == 0:
                write_pgm(state.grid, out / f"map_{res.timestamp}.pgm")
            n += 1
            invalid += not res.valid
            last = (res, state)
    if last and snapshots:
        res, state = last
        write_pgm(state.grid, out / f"map_{res.timestamp}.pgm")
        if args.plot:
            from .plotting import map_figure

            map_figure(normalize(state.grid), cfg.resolution, res.polygon.vertices, res.local_pose,
                       out / f"map_{res.timestamp}.png")
    print(f"{n} frames processed, {invalid} invalid, output in {out}")
    return 0


def cmd_build(args) -> int:
    return _process(args, snapshots=True)


def cmd_freespace(args) -> int:
    return _process(args, snapshots=False)


def _sensor(args) -> SensorSpec:
    return SensorSpec(aperture_deg=args.aperture, resolution_deg=args.beam_step, max_range=args.max_range,
                      range_noise=args.noise, dropout=args.dropout, clutter=args.clutter)


def cmd_simulate(args) -> int:
    world = SyntheticWorld.load(args.world)
    traj = load_trajectory(args.traj)
    paths = write_outputs(simulate(world, traj, _sensor(args), args.seed), args.out)
    print("\n".join(f"{k}: {v}" for k, v in paths.items()))
    return 0


def cmd_bench(args) -> int:
    from .bench import bench

    cfg = _config(args)
    world = SyntheticWorld.load(args.world)
    traj = load_trajectory(args.traj)
    sensor = SensorSpec(aperture_deg=cfg.aperture_deg, max_range=cfg.max_range, mount=cfg.mount,
                        resolution_deg=args.beam_step)
    report = bench(world, traj, cfg, sensor)
    report.budget_ms = args.budget_ms
    paths = report.write(args.out)
    if not args.no_plots:
        from .plotting import bench_figures

        bench_figures(report, args.out)
    sys.stdout.write(report.to_text())
    print(f"report: {paths['json']}")
    if args.budget_ms > 0 and not report.budget_ok:
        print(f"mean frame latency {report.mean('latency_ms'):.2f} ms exceeds the {args.budget_ms:.0f} ms budget",
              file=sys.stderr)
        return 3
    return 0


def cmd_scenario(args) -> int:
    """Write ready-made worlds and trajectories for simulate and bench."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    worlds = {"box_room.json": box_room(20.0, 14.0), "corridor.json": corridor(120.0, 6.0, pillars=6, seed=1)}
    for name, world in worlds.items():
        (out / name).write_text(json.dumps(world.to_json()) + "\n")
    trajs = {
        "stationary.csv": straight_trajectory(Pose2D(6.0, 7.0, 0.0), 0.0, 50),
        "drive.csv": straight_trajectory(Pose2D(5.0, 3.0, 0.0), 10.0, 100),
    }
    for name, traj in trajs.items():
        with open(out / name, "w", newline="") as fh:
            write_odometry_log(traj, fh)
    print("\n".join(str(out / n) for n in [*worlds, *trajs]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ogm-freespace", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (("build", cmd_build, "maps and polygons from scan and odometry logs"),
                               ("freespace", cmd_freespace, "polygons only")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scans", required=True, type=Path)
        p.add_argument("--odom", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        _add_config_flags(p)
        if name == "build":
            p.add_argument("--snapshot-every", type=int, default=10, help="PGM every N frames (last frame always)")
            p.add_argument("--plot", action="store_true", help="also render the last map with its polygon")
        else:
            p.set_defaults(snapshot_every=0, plot=False)
        p.set_defaults(func=fn)

    p = sub.add_parser("simulate", help="synthetic scan and odometry logs from a world and trajectory")
    p.add_argument("--world", required=True, type=Path)
    p.add_argument("--traj", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--aperture", type=float, default=145.0)
    p.add_argument("--beam-step", type=float, default=0.25)
    p.add_argument("--max-range", type=float, default=150.0)
    p.add_argument("--noise", type=float, default=0.0, help="range noise sigma [m]")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--clutter", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="enhanced vs conventional ISM and alignment cost")
    p.add_argument("--world", required=True, type=Path)
    p.add_argument("--traj", required=True, type=Path)
    p.add_argument("--out", type=Path, default=Path("bench_out"))
    p.add_argument("--beam-step", type=float, default=0.25)
    p.add_argument("--budget-ms", type=float, default=40.0, help="fail if mean latency exceeds this (0 disables)")
    p.add_argument("--no-plots", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("scenario", help="write example worlds and trajectories")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
