"""Command-line entry point: run, sweep, decide, report.

Exit codes: 0 success, 2 configuration/input error, 3 unwritable output.
The SOFOF_SEED environment variable is a fallback for --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_config
from .errors import DomainError, ValidationError
from .geo import Point2, Route, lodm_distance, time_in_area
from .scenario import run, sweep, write_report, write_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OUTPUT = 3


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_CONFIG


def _seed_override(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SOFOF_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"SOFOF_SEED must be an integer, got {env!r}")
    return None


def _load(args):
    cfg = load_config(args.config)
    seed = _seed_override(args)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg


def _int_list(text: str, flag: str) -> list[int]:
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise ConfigError(f"{flag} needs at least one value")
    try:
        return [int(part) for part in items]
    except ValueError as exc:
        raise ConfigError(f"{flag} values must be integers: {exc}")


def _parse_pos(text: str, flag: str) -> Point2:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"{flag} must be 'x,y'")
    try:
        return Point2(float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise ConfigError(f"{flag} must be numeric: {exc}")


def load_route_csv(path: str | Path) -> Route:
    """Waypoints from a CSV of x,y rows (blank lines ignored)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read route file: {exc}")
    points = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ConfigError(f"route line {lineno}: expected 'x,y', got {line!r}")
        try:
            points.append(Point2(float(parts[0]), float(parts[1])))
        except ValueError:
            raise ConfigError(f"route line {lineno}: coordinates must be numbers, got {line!r}")
    if not points:
        raise ConfigError("route file has no waypoints")
    return Route(tuple(points))


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
    except ConfigError as exc:
        return _fail(str(exc))
    report = run(cfg)
    try:
        write_report(report, Path(args.output_dir))
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    print(f"wrote report.json, episodes.csv, latency.csv to {args.output_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        cfg = _load(args)
        dt_values = _int_list(args.dt_max, "--dt-max")
        n_values = _int_list(args.n, "--n")
    except ConfigError as exc:
        return _fail(str(exc))
    try:
        rows = sweep(cfg, dt_values, n_values)
    except ValidationError as exc:
        return _fail(str(exc))
    try:
        write_sweep(rows, Path(args.output_dir))
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    print(f"wrote sweep.csv ({len(rows)} cells) to {args.output_dir}")
    return EXIT_OK


def cmd_decide(args) -> int:
    try:
        cfg = load_config(args.config)
        route = load_route_csv(args.route)
        if args.codm:
            v = args.v
            t_min = args.t_min if args.t_min is not None else cfg.provider.t_min
            t = time_in_area(route, cfg.provider.offloading_area, v)
            accepted = args.map_known and t >= t_min
            print(f"{'accept' if accepted else 'decline'} time_in_area={t:.3f}")
        else:
            pos_sp = _parse_pos(args.sp_pos, "--sp-pos") if args.sp_pos else cfg.provider.connection_point
            pos_sr = _parse_pos(args.sr_pos, "--sr-pos") if args.sr_pos else route.waypoints[0]
            r_off = args.r_off if args.r_off is not None else _first_vehicle_value(cfg, "r_off")
            d_min = args.d_min if args.d_min is not None else _first_vehicle_value(cfg, "d_min")
            accepted, d_passed = lodm_distance(route, pos_sr, r_off, pos_sp, d_min)
            print(f"{'accept' if accepted else 'decline'} d_passed={d_passed:.3f}")
    except (ConfigError, ValidationError, DomainError) as exc:
        return _fail(str(exc))
    return EXIT_OK


def _first_vehicle_value(cfg, attr: str) -> float:
    if not cfg.vehicles:
        raise ConfigError(f"--{attr.replace('_', '-')} required: config has no vehicles to default from")
    return getattr(cfg.vehicles[0].requester, attr)


def cmd_report(args) -> int:
    path = Path(args.output_dir) / "report.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        return _fail(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        return _fail(f"malformed report: {exc}")
    g = doc["global"]
    print(f"scenario: seed={doc['seed']} duration={doc['duration_ms'] / 1000.0:.1f}s vehicles={len(doc['vehicles'])}")
    for vm in doc["vehicles"]:
        violations = " ".join(f"{k}={v}" for k, v in sorted(vm["violations"].items())) or "none"
        print(
            f"vehicle {vm['station']}: t_off={vm['t_off_total_s']:.2f}s"
            f" episodes={len(vm['episodes'])} fallbacks={vm['fallback_count']}"
            f" violations: {violations}"
            f" gap_max={vm['trajectory_gap_max_ms']}ms"
        )
    print(f"cpu: c_with={g['c_with']:.2f} c_without={g['c_without']:.2f} percent-core-seconds")
    print(f"break-even ratio: {g['break_even_ratio']:.4f}  deactivation ratio: {g['deactivation_ratio']:.4f}")
    print(f"verdict: {'offloading pays' if g['offloading_pays'] else 'offloading does not pay'}")
    print(f"note: {g['break_even_note']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sofof", description="Function-offloading scenario simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write report.json + CSVs")
    p.add_argument("config", help="scenario config (TOML)")
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the (n, dt_max) cross product and write sweep.csv")
    p.add_argument("config")
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--dt-max", default="10,25,50,100,150", help="comma-separated dt_max values in ms")
    p.add_argument("--n", default="1,2,4", help="comma-separated vehicle counts")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("decide", help="one-shot offloading decision on a route CSV")
    p.add_argument("config")
    p.add_argument("--route", required=True, help="CSV file of x,y waypoints")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--codm", action="store_true", help="provider-side time-in-area rule")
    mode.add_argument("--lodm", action="store_true", help="requester-side in-radius distance rule")
    p.add_argument("--v", type=float, default=10.0, help="constant speed in m/s (codm)")
    p.add_argument("--t-min", type=float, default=None, help="minimum in-area seconds (codm)")
    p.add_argument("--map-unknown", dest="map_known", action="store_false", help="treat the map as unknown (codm)")
    p.add_argument("--r-off", type=float, default=None, help="offloading radius in m (lodm)")
    p.add_argument("--d-min", type=float, default=None, help="minimum in-radius distance in m (lodm)")
    p.add_argument("--sr-pos", default=None, help="requester position 'x,y' (lodm; default: first waypoint)")
    p.add_argument("--sp-pos", default=None, help="provider connection point 'x,y' (lodm; default: from config)")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("report", help="summarize a report.json written by run")
    p.add_argument("output_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
