"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from critzone.bench import bench
from critzone.braking import avoid_by_braking, brake_boundary_distance
from critzone.config import load_scenario
from critzone.errors import ConvergenceError, CritZoneError
from critzone.models import ModelKind, friction_threshold, steering_limits
from critzone.scenario import Scenario
from critzone.steering import Algorithm, RootConfig, avoid_by_steering
from critzone.zone import compute_zone, make_grid

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_IO = 4

ZONE_COLUMNS = ("offset_m", "steer_distance_m", "steer_ttc_s", "brake_distance_m", "brake_ttc_s")


class _IOFailure(Exception):
    pass


def _grid_spec(text: str):
    try:
        lo, hi, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN:MAX:STEP, got {text!r}") from None
    return lo, hi, step


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", metavar="PATH", help="scenario file (key = value lines)")
    common.add_argument("--out", metavar="PATH", help="write results here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    solve = argparse.ArgumentParser(add_help=False)
    solve.add_argument("--model", choices=[k.value for k in ModelKind], default="dm")
    solve.add_argument("--algorithm", choices=("2", "3", "4"), default="2")
    solve.add_argument("--solver", choices=("newton", "halley"), default="halley")
    solve.add_argument("--t0", type=_positive_float, default=100.0, help="initial guess (s)")
    solve.add_argument("--tol", type=_positive_float, default=1e-6, help="residual tolerance (m)")
    solve.add_argument("--dt-integration", type=_positive_float, default=0.01, metavar="S",
                       help="trapezoidal step for the dynamic model (s)")

    parser = argparse.ArgumentParser(prog="critzone", description="Latest comfortable braking and steering.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("brake", parents=[common], help="braking check for the scenario")
    sub.add_parser("steer", parents=[common, solve], help="steering check for the scenario")
    z = sub.add_parser("zone", parents=[common, solve], help="critical zone over lateral offsets")
    z.add_argument("--grid", type=_grid_spec, metavar="MIN:MAX:STEP", help="offset grid (m)")
    z.add_argument("--threads", type=_positive_int, default=1)
    b = sub.add_parser("bench", parents=[common], help="per-phase timing of the steering checks")
    b.add_argument("--repeat", type=_positive_int, default=1000)
    b.add_argument("--warmup", type=int, default=100)
    b.add_argument("--models", default="dm,sscm,km,pmm", help="comma-separated model list")
    s = sub.add_parser("sweep", parents=[common], help="steering limits against speed")
    s.add_argument("--speeds", type=_grid_spec, default=(30.0, 130.0, 10.0), metavar="MIN:MAX:STEP",
                   help="speed grid (km/h)")
    s.add_argument("--model", choices=[k.value for k in ModelKind if k is not ModelKind.PMM], default="dm")
    s.add_argument("--mu", type=_positive_float, default=None, help="friction coefficient (default: scenario)")
    return parser


def _clean(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) else value
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _render(rows: list[dict], fmt: str, meta: dict | None = None) -> str:
    if fmt == "json":
        payload = {"rows": [{k: _clean(v) for k, v in r.items()} for r in rows]}
        if meta:
            payload["meta"] = {k: _clean(v) for k, v in meta.items()}
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    if rows:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(rows[0].keys())
        for r in rows:
            writer.writerow(repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r.values())
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def _scenario(args) -> Scenario:
    if not args.scenario:
        return Scenario()
    try:
        return load_scenario(args.scenario)
    except OSError as exc:
        raise _IOFailure(f"cannot read {args.scenario}: {exc.strerror or exc}") from exc


def _root_config(args) -> RootConfig:
    return RootConfig(t0=args.t0, tol=args.tol, solver=args.solver)


def _cmd_brake(args) -> str:
    sc = _scenario(args)
    out = avoid_by_braking(sc.brake_state(), sc.comfort, sc.x_margin)
    dist = brake_boundary_distance(sc.closing_speed, sc.a_b, sc.comfort, sc.x_margin)
    row = {
        "t_b_s": out.t_b, "t_bj_s": out.t_bj, "t_ba_s": out.t_ba, "final_gap_m": -out.final_state.dx,
        "brake_distance_m": dist, "brake_ttc_s": dist / sc.closing_speed,
        "verdict": ("no braking needed" if not out.braking_needed else
                    "avoidable" if out.avoidable else "not avoidable"),
    }
    return _render([row], args.format)


def _cmd_steer(args) -> str:
    sc = _scenario(args)
    out = avoid_by_steering(sc, args.model, args.algorithm, _root_config(args), args.dt_integration)
    if out.no_risk:
        verdict = "no risk of collision"
    else:
        verdict = "avoidable" if out.avoidable else "not avoidable"
    row = {
        "model": out.kind.value, "algorithm": out.algorithm.number, "t_s_s": out.t_s, "t_sa_s": out.t_sa,
        "required_gap_m": out.required_gap, "required_ttc_s": out.required_gap / sc.closing_speed,
        "final_yaw_deg": math.degrees(out.final_yaw),
        "iterations": out.iterations, "verdict": verdict,
    }
    return _render([row], args.format)


def _cmd_zone(args) -> str:
    sc = _scenario(args)
    grid = None if args.grid is None else make_grid(*args.grid)
    z = compute_zone(sc, args.model, args.algorithm, grid, _root_config(args), args.dt_integration, args.threads)
    rows = [dict(zip(ZONE_COLUMNS, r)) for r in z.rows()]
    meta = {"model": z.model.value, "algorithm": z.algorithm.number, "closing_speed_ms": z.closing_speed}
    return _render(rows, args.format, meta)


def _cmd_bench(args) -> str:
    sc = _scenario(args)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    for m in models:
        ModelKind.parse(m)
    rep = bench(sc, models=models, repeat=args.repeat, warmup=args.warmup)
    if args.format == "json":
        return json.dumps(rep.as_dict(), indent=2) + "\n"
    rows = []
    for r in rep.rows:
        row = {"model": r.model, "algorithm": r.algorithm, "iterations": r.iterations}
        for phase in ("t_s", "states", "x_s", "total"):
            st = r.phases.get(phase)
            row[f"{phase}_median_us"] = st.median_us if st else math.nan
            row[f"{phase}_p95_us"] = st.p95_us if st else math.nan
        rows.append(row)
    for name, s in rep.solvers.items():
        rows.append({"model": f"solver:{name}", "algorithm": 0, "iterations": s["iterations"],
                     "t_s_median_us": s["median_us"], "t_s_p95_us": s["p95_us"],
                     "states_median_us": math.nan, "states_p95_us": math.nan,
                     "x_s_median_us": math.nan, "x_s_p95_us": math.nan,
                     "total_median_us": s["median_us"], "total_p95_us": s["p95_us"]})
    return _render(rows, "csv")


def _cmd_sweep(args) -> str:
    sc = _scenario(args)
    mu = sc.mu if args.mu is None else args.mu
    speeds = make_grid(*args.speeds)
    if speeds[0] <= 0:
        raise CritZoneError("speeds must be positive")
    rows = []
    for v_kmh in speeds:
        lim = steering_limits(sc.params, sc.comfort, mu, v_kmh / 3.6, args.model)
        rows.append({
            "v_x_kmh": float(v_kmh),
            "delta_ss_deg": math.degrees(lim.delta_ss),
            "delta_max_mu_deg": math.degrees(lim.delta_max_mu),
            "delta_max_deg": math.degrees(lim.delta_max),
            "omega_ss_degs": math.degrees(lim.omega_ss),
            "omega_max_degs": math.degrees(lim.omega_max),
        })
    meta = {"mu": mu, "mu_threshold": friction_threshold(sc.params, sc.comfort.a_smax)}
    return _render(rows, args.format, meta)


COMMANDS = {"brake": _cmd_brake, "steer": _cmd_steer, "zone": _cmd_zone, "bench": _cmd_bench, "sweep": _cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = COMMANDS[args.command](args)
        _emit(text, args.out)
    except _IOFailure as exc:
        print(f"critzone: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConvergenceError as exc:
        print(f"critzone: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (CritZoneError, ValueError) as exc:
        print(f"critzone: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
