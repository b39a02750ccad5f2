"""Command line entry points: estimate, simulate, serve.

estimate  shape.json --config cfg.json --mode zero-torque -o report.json
simulate  scenario.json -o shape.json        (+ ground-truth sidecar)
serve     scenario.json --port 8765          (interactive probing session)

Exit codes: 0 success, 2 parse error, 3 assumption violation (e.g. no
undisturbed section), 4 equilibrium not converged, 1 anything else.  Errors
are emitted to stderr as one machine-readable JSON line.  The only
environment variable honoured is ``RODFORCE_LOG`` (log level).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .core import RodState
from .errors import (
    AssumptionViolation,
    NotConverged,
    ParseError,
    RodForceError,
)
from .estimator import (
    EstimatorConfig,
    compute_metrics,
    format_report_row,
    global_balance,
    run_estimation,
)
from .simulator import clamp_reactions, relax_to_equilibrium
from .smoothing import SmoothingParams, resample, smooth

log = logging.getLogger("rodforce")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_ASSUMPTION = 3
EXIT_NOT_CONVERGED = 4

MODES = {
    "known-pos": "known-position",
    "zero-torque": "zero-torque",
    "midpoint": "midpoint",
}


def _apply_rod_overrides(shape: rio.ShapeFile, overrides: dict) -> rio.ShapeFile:
    if not overrides:
        return shape
    get = overrides.get
    rest = get("rest_lengths", shape.rest_lengths)
    return rio.ShapeFile(
        points=shape.points,
        bend_stiffness=float(get("bend_stiffness", shape.bend_stiffness)),
        twist_stiffness=float(get("twist_stiffness", shape.twist_stiffness)),
        wpp=np.asarray(get("weight_per_piece", shape.wpp), dtype=np.float64),
        rest_lengths=None if rest is None else np.asarray(rest, dtype=np.float64),
        clamp_nodes=shape.clamp_nodes,
        timestamps=shape.timestamps,
    )


def estimate_pipeline(
    shape: rio.ShapeFile,
    cfg: EstimatorConfig,
    smoothing: SmoothingParams,
    mode: str,
    truth=None,
    do_smooth: bool = True,
):
    """Smoothing -> torques -> classification -> estimation -> metrics."""
    if not np.isfinite(shape.bend_stiffness) or not np.isfinite(
        shape.twist_stiffness
    ):
        raise ParseError(
            "shape metadata lacks stiffness values; supply them via --config"
        )
    points = np.asarray(shape.points, dtype=np.float64)
    template = RodState(
        points,
        shape.bend_stiffness,
        shape.twist_stiffness,
        shape.wpp,
        wpp_axis_check=False,
    )
    smoothing_info = None
    if do_smooth:
        result = smooth(points, template, smoothing)
        points = np.asarray(result.rod.nodes)
        smoothing_info = {
            "steps_taken": int(result.steps_taken),
            "j_history": list(result.j_history),
        }
    rest = shape.rest_lengths
    if smoothing.resample_to is not None and smoothing.resample_to != len(points) - 1:
        working = RodState(
            points,
            shape.bend_stiffness,
            shape.twist_stiffness,
            shape.wpp,
            wpp_axis_check=False,
        )
        points = np.asarray(resample(working, smoothing.resample_to).nodes)
        rest = None
    if rest is not None and len(rest) != len(points) - 1:
        rest = None
    rod = RodState(
        points,
        shape.bend_stiffness,
        shape.twist_stiffness,
        shape.wpp,
        rest_lengths=rest,
        wpp_axis_check=False,
    )

    known_positions = None
    truth_applied = None
    if truth is not None:
        truth_applied, _ = truth
        known_positions = [t.position for t in truth_applied]
    labeling, estimates, _ = run_estimation(
        rod, cfg, mode=mode, known_positions=known_positions
    )
    balance = global_balance(estimates, labeling, rod, cfg)

    metrics = None
    if truth_applied:
        entries = []
        interior = [e for e in estimates if not e.boundary]
        for k, t in enumerate(truth_applied):
            label = f"F{k + 1}"
            match = _closest_estimate(interior, t.position)
            if match is None:
                m = compute_metrics(t.force, np.zeros(3), t.position, None)
            else:
                m = compute_metrics(t.force, match.force, t.position, match.position)
            entries.append((label, m, format_report_row(label, m)))
        metrics = rio.metrics_block(entries)
    report = rio.build_report(
        rod, labeling, estimates, cfg, balance,
        smoothing_info=smoothing_info, metrics=metrics,
    )
    return report, rod, labeling, estimates


def _closest_estimate(interior, position):
    best = None
    for e in interior:
        if e.position is None:
            continue
        d = float(np.linalg.norm(np.asarray(e.position) - position))
        if best is None or d < best[0]:
            best = (d, e)
    if best is None and interior:
        return max(interior, key=lambda e: float(np.linalg.norm(e.force)))
    return None if best is None else best[1]


def cmd_estimate(args) -> int:
    shape = rio.read_shape(args.shape)
    if args.config:
        cfg, smoothing, overrides = rio.read_config(args.config)
        shape = _apply_rod_overrides(shape, overrides)
    else:
        cfg, smoothing = EstimatorConfig(), SmoothingParams()
    if args.mode == "known-pos" and not args.truth:
        raise ParseError(
            "known-pos mode needs application points; pass --truth <sidecar>"
        )
    truth = rio.read_truth(args.truth) if args.truth else None
    report, _, _, _ = estimate_pipeline(
        shape,
        cfg,
        smoothing,
        MODES[args.mode],
        truth=truth,
        do_smooth=not args.no_smoothing,
    )
    report["source"] = Path(args.shape).name
    rio.write_json(args.output, report)
    if report["metrics"]:
        for entry in report["metrics"]:
            print(entry["row"])
    log.info("report written to %s", args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = rio.read_scenario(args.scenario)
    result = relax_to_equilibrium(scenario)
    reactions = clamp_reactions(result, scenario)
    rod = result.rod
    shape = rio.ShapeFile(
        points=np.asarray(rod.nodes),
        bend_stiffness=rod.bend_stiffness,
        twist_stiffness=rod.twist_stiffness,
        wpp=np.asarray(rod.wpp),
        rest_lengths=np.asarray(rod.rest_lengths),
        clamp_nodes=tuple(int(c.node) for c in scenario.clamps),
    )
    rio.write_shape(args.output, shape)
    sidecar = args.truth_output or _default_sidecar(args.output)
    rio.write_truth(sidecar, scenario, result, reactions)
    print(
        f"equilibrium: iterations={result.iterations} "
        f"residual={result.residual_force_inf_norm:.3e} N"
    )
    log.info("shape written to %s, ground truth to %s", args.output, sidecar)
    return EXIT_OK


def _default_sidecar(output):
    p = Path(output)
    return str(p.with_name(p.stem + ".truth.json"))


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    scenario = rio.read_scenario(args.scenario)
    if args.config:
        cfg, _, _ = rio.read_config(args.config)
    else:
        cfg = EstimatorConfig()
    app = create_app(
        scenario,
        cfg,
        assets_dir=args.assets,
        heartbeat=args.heartbeat,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rodforce",
        description="External force estimation for elastic rods from shape",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate forces from a shape file")
    est.add_argument("shape", help="shape JSON (or x,y,z CSV)")
    est.add_argument("--config", help="estimator/smoothing config JSON")
    est.add_argument(
        "--mode",
        choices=sorted(MODES),
        default="midpoint",
        help="disturbance resolution mode",
    )
    est.add_argument("--truth", help="ground-truth sidecar for metrics")
    est.add_argument("--no-smoothing", action="store_true")
    est.add_argument("-o", "--output", required=True, help="report JSON path")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="relax a scenario to equilibrium")
    sim.add_argument("scenario", help="scenario JSON")
    sim.add_argument("-o", "--output", required=True, help="shape JSON path")
    sim.add_argument(
        "--truth-output", help="sidecar path (default: <output>.truth.json)"
    )
    sim.set_defaults(func=cmd_simulate)

    srv = sub.add_parser("serve", help="interactive probing session")
    srv.add_argument("scenario", help="scenario JSON")
    srv.add_argument("--config", help="estimator config JSON")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8765)
    srv.add_argument("--assets", help="directory of viewer static assets")
    srv.add_argument(
        "--heartbeat", type=float, default=15.0, help="idle resend period (s)"
    )
    srv.set_defaults(func=cmd_serve)
    return parser


def _emit_error(category: str, exc: Exception):
    print(
        json.dumps({"error": category, "message": str(exc)}),
        file=sys.stderr,
    )


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RODFORCE_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        _emit_error("parse_error", exc)
        return EXIT_PARSE
    except AssumptionViolation as exc:
        hint = (
            " (try loosening cond_b_rel_tol, enabling smoothing, or checking "
            "stiffness metadata)"
        )
        _emit_error("assumption_violation", type(exc)(str(exc) + hint))
        return EXIT_ASSUMPTION
    except NotConverged as exc:
        _emit_error("not_converged", exc)
        return EXIT_NOT_CONVERGED
    except RodForceError as exc:
        _emit_error("error", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
