"""File formats: shapes, scenarios, ground-truth sidecars, reports, configs.

Everything is JSON with SI units (meters, newtons, radians) and a
``format_version`` field; shapes can also be imported from bare x,y,z CSV
rows.  Serialization is deterministic: fixed field order, floats at 17
significant digits (lossless round-trip), so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import RodState
from .errors import ParseError
from .estimator import EstimatorConfig
from .simulator import AppliedForce, Clamp, SimScenario, SolverParams
from .smoothing import SmoothingParams

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------

def _format_value(value, indent, level):
    pad = " " * (indent * (level + 1))
    closing = " " * (indent * level)
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [_format_value(v, indent, level + 1) for v in value]
        if all("\n" not in i and len(i) < 24 for i in items) and len(items) <= 8:
            return "[" + ", ".join(items) + "]"
        return "[\n" + ",\n".join(pad + i for i in items) + "\n" + closing + "]"
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            pad + json.dumps(str(k)) + ": " + _format_value(v, indent, level + 1)
            for k, v in value.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + closing + "}"
    raise TypeError(f"cannot serialize {type(value)!r}")


def dumps_canonical(obj) -> str:
    """Deterministic JSON: insertion order, 17-significant-digit floats."""
    return _format_value(obj, 2, 0) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(obj))


def read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected a JSON object at top level")
    return data


def _need(data: dict, key: str, path):
    if key not in data:
        raise ParseError(f"{path}: missing required field {key!r}")
    return data[key]


def _vec3(value, path, key):
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,):
        raise ParseError(f"{path}: field {key!r} must be a 3-vector")
    return arr


# ---------------------------------------------------------------------------
# Shape files
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShapeFile:
    """Ordered observation points plus the material metadata for estimation."""

    points: np.ndarray
    bend_stiffness: float
    twist_stiffness: float
    wpp: np.ndarray
    rest_lengths: Optional[np.ndarray] = None
    clamp_nodes: tuple = ()
    timestamps: Optional[np.ndarray] = None

    def to_rod(self) -> RodState:
        return RodState(
            self.points,
            self.bend_stiffness,
            self.twist_stiffness,
            self.wpp,
            rest_lengths=self.rest_lengths,
            wpp_axis_check=False,
        )


def write_shape(path, shape: ShapeFile):
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "shape",
        "points": np.asarray(shape.points, dtype=np.float64),
        "metadata": {
            "bend_stiffness": float(shape.bend_stiffness),
            "twist_stiffness": float(shape.twist_stiffness),
            "weight_per_piece": np.asarray(shape.wpp, dtype=np.float64),
            "rest_lengths": None
            if shape.rest_lengths is None
            else np.asarray(shape.rest_lengths, dtype=np.float64),
            "clamp_nodes": list(shape.clamp_nodes),
            "timestamps": None
            if shape.timestamps is None
            else np.asarray(shape.timestamps, dtype=np.float64),
        },
    }
    write_json(path, doc)


def read_shape(path) -> ShapeFile:
    if str(path).endswith(".csv"):
        return ShapeFile(
            points=read_points_csv(path),
            bend_stiffness=float("nan"),
            twist_stiffness=float("nan"),
            wpp=np.zeros(3),
        )
    data = read_json(path)
    points = np.asarray(_need(data, "points", path), dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ParseError(f"{path}: points must be an N x 3 array")
    meta = _need(data, "metadata", path)
    rest = meta.get("rest_lengths")
    ts = meta.get("timestamps")
    try:
        return ShapeFile(
            points=points,
            bend_stiffness=float(_need(meta, "bend_stiffness", path)),
            twist_stiffness=float(_need(meta, "twist_stiffness", path)),
            wpp=_vec3(_need(meta, "weight_per_piece", path), path, "weight_per_piece"),
            rest_lengths=None if rest is None else np.asarray(rest, dtype=np.float64),
            clamp_nodes=tuple(meta.get("clamp_nodes", ())),
            timestamps=None if ts is None else np.asarray(ts, dtype=np.float64),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc


def read_points_csv(path) -> np.ndarray:
    """x,y,z rows, optional single header line."""
    rows = []
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh)):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    values = [float(c) for c in row[:3]]
                except ValueError:
                    if lineno == 0:
                        continue  # header
                    raise ParseError(f"{path}: non-numeric row {lineno + 1}")
                if len(values) != 3:
                    raise ParseError(f"{path}: row {lineno + 1} needs x,y,z")
                rows.append(values)
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if len(rows) < 5:
        raise ParseError(f"{path}: need at least 5 points, got {len(rows)}")
    return np.asarray(rows, dtype=np.float64)


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

def write_scenario(path, scenario: SimScenario):
    rod = scenario.rod
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "scenario",
        "rod": {
            "nodes": np.asarray(rod.nodes),
            "bend_stiffness": float(rod.bend_stiffness),
            "twist_stiffness": float(rod.twist_stiffness),
            "weight_per_piece": np.asarray(scenario.effective_wpp),
            "rest_lengths": np.asarray(rod.rest_lengths),
            "twist_angles": np.asarray(rod.twist_angles),
        },
        "clamps": [
            {
                "node": int(c.node),
                "position": np.asarray(c.position),
                "tangent": None if c.tangent is None else np.asarray(c.tangent),
            }
            for c in scenario.clamps
        ],
        "applied_forces": [
            {
                "piece": int(f.piece),
                "ratio": float(f.ratio),
                "force": np.asarray(f.force),
            }
            for f in scenario.applied_forces
        ],
        "solver": {
            "max_iters": int(scenario.solver.max_iters),
            "force_tolerance": float(scenario.solver.force_tolerance),
            "damping": float(scenario.solver.damping),
            "step_size": float(scenario.solver.step_size),
            "stretch_stiffness": None
            if scenario.solver.stretch_stiffness is None
            else float(scenario.solver.stretch_stiffness),
        },
    }
    write_json(path, doc)


def read_scenario(path) -> SimScenario:
    data = read_json(path)
    rod_doc = _need(data, "rod", path)
    try:
        nodes = np.asarray(_need(rod_doc, "nodes", path), dtype=np.float64)
        rest = rod_doc.get("rest_lengths")
        twist = rod_doc.get("twist_angles")
        rod = RodState(
            nodes,
            float(_need(rod_doc, "bend_stiffness", path)),
            float(_need(rod_doc, "twist_stiffness", path)),
            _vec3(_need(rod_doc, "weight_per_piece", path), path, "weight_per_piece"),
            rest_lengths=None if rest is None else np.asarray(rest, dtype=np.float64),
            twist_angles=None if twist is None else np.asarray(twist, dtype=np.float64),
            wpp_axis_check=False,
        )
        clamps = tuple(
            Clamp(
                node=int(_need(c, "node", path)),
                position=_vec3(_need(c, "position", path), path, "position"),
                tangent=None
                if c.get("tangent") is None
                else _vec3(c["tangent"], path, "tangent"),
            )
            for c in _need(data, "clamps", path)
        )
        forces = tuple(
            AppliedForce(
                piece=int(_need(f, "piece", path)),
                ratio=float(_need(f, "ratio", path)),
                force=_vec3(_need(f, "force", path), path, "force"),
            )
            for f in data.get("applied_forces", ())
        )
        solver_doc = data.get("solver", {})
        stretch = solver_doc.get("stretch_stiffness")
        solver = SolverParams(
            max_iters=int(solver_doc.get("max_iters", 50000)),
            force_tolerance=float(solver_doc.get("force_tolerance", 1e-6)),
            damping=float(solver_doc.get("damping", 1e-3)),
            step_size=float(solver_doc.get("step_size", 1.0)),
            stretch_stiffness=None if stretch is None else float(stretch),
        )
        return SimScenario(rod=rod, clamps=clamps, applied_forces=forces, solver=solver)
    except ParseError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ParseError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Ground-truth sidecar
# ---------------------------------------------------------------------------

def write_truth(path, scenario: SimScenario, result, reactions):
    rod = result.rod
    entries = []
    for f in scenario.applied_forces:
        anchor = rod.nodes[f.piece]
        position = anchor + f.ratio * (rod.nodes[f.piece + 1] - anchor)
        entries.append(
            {
                "piece": int(f.piece),
                "ratio": float(f.ratio),
                "force": np.asarray(f.force),
                "position": position,
            }
        )
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "truth",
        "applied_forces": entries,
        "clamp_reactions": [
            {
                "node": int(c.node),
                "position": np.asarray(c.position),
                "force": np.asarray(r),
            }
            for c, r in zip(scenario.clamps, reactions)
        ],
        "residual_force_inf_norm": float(result.residual_force_inf_norm),
        "iterations": int(result.iterations),
    }
    write_json(path, doc)


@dataclass(frozen=True, eq=False)
class TruthEntry:
    piece: int
    ratio: float
    force: np.ndarray
    position: np.ndarray


def read_truth(path):
    data = read_json(path)
    try:
        applied = [
            TruthEntry(
                piece=int(e["piece"]),
                ratio=float(e["ratio"]),
                force=_vec3(e["force"], path, "force"),
                position=_vec3(e["position"], path, "position"),
            )
            for e in data.get("applied_forces", ())
        ]
        reactions = [
            TruthEntry(
                piece=int(e["node"]),
                ratio=0.0,
                force=_vec3(e["force"], path, "force"),
                position=_vec3(e["position"], path, "position"),
            )
            for e in data.get("clamp_reactions", ())
        ]
    except (TypeError, ValueError, KeyError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return applied, reactions


# ---------------------------------------------------------------------------
# Estimator / smoothing config
# ---------------------------------------------------------------------------

def read_config(path):
    """Returns (EstimatorConfig, SmoothingParams, rod overrides dict)."""
    data = read_json(path)
    return parse_config(data, path)


def parse_config(data: dict, origin="config"):
    est_doc = data.get("estimator", {})
    smooth_doc = data.get("smoothing", {})
    try:
        cfg = EstimatorConfig(
            cond_a_tol=float(est_doc.get("cond_a_tol", 1e-3)),
            cond_b_rel_tol=float(est_doc.get("cond_b_rel_tol", 1e-2)),
            svd_rank_tol=float(est_doc.get("svd_rank_tol", 1e-4)),
            parallel_tol=float(est_doc.get("parallel_tol", 1e-3)),
            section_weight_in_force=bool(
                est_doc.get("section_weight_in_force", False)
            ),
        )
        m_p = smooth_doc.get("m_p")
        resample_to = smooth_doc.get("resample_to")
        smoothing = SmoothingParams(
            m_p=None if m_p is None else float(m_p),
            max_steps=int(smooth_doc.get("max_steps", 200)),
            lam=float(smooth_doc.get("lam", 0.5)),
            resample_to=None if resample_to is None else int(resample_to),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{origin}: {exc}") from exc
    rod_overrides = data.get("rod", {})
    if not isinstance(rod_overrides, dict):
        raise ParseError(f"{origin}: 'rod' must be an object")
    return cfg, smoothing, rod_overrides


# ---------------------------------------------------------------------------
# Estimation report
# ---------------------------------------------------------------------------

def build_report(
    rod,
    labeling,
    estimates,
    cfg: EstimatorConfig,
    balance,
    smoothing_info=None,
    metrics=None,
    source=None,
):
    sections = [
        {
            "kind": s.kind,
            "first_piece": int(s.first_piece),
            "last_piece": int(s.last_piece),
            "resultant": None if s.f_r is None else np.asarray(s.f_r),
        }
        for s in labeling.sections
    ]
    disturbances = [
        {
            "section_index": int(e.section_index),
            "first_piece": int(e.first_piece),
            "last_piece": int(e.last_piece),
            "boundary": bool(e.boundary),
            "force": np.asarray(e.force),
            "mode": e.mode,
            "position": None if e.position is None else np.asarray(e.position),
            "torque": None if e.torque is None else np.asarray(e.torque),
            "residual": float(e.residual),
            "orth_residual": float(e.orth_residual),
            "section_weight": np.asarray(
                (e.last_piece - e.first_piece + 1) * rod.wpp
            ),
        }
        for e in estimates
    ]
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "report",
        "source": source,
        "piece_count": int(rod.piece_count),
        "labels": list(labeling.labels),
        "sections": sections,
        "disturbances": disturbances,
        "window_residuals": np.asarray(labeling.window_residuals),
        "window_well_posed": [bool(w) for w in labeling.window_well_posed],
        "balance": {
            "residual": np.asarray(balance),
            "inf_norm": float(np.abs(balance).max()),
        },
        "config": {
            "cond_a_tol": cfg.cond_a_tol,
            "cond_b_rel_tol": cfg.cond_b_rel_tol,
            "svd_rank_tol": cfg.svd_rank_tol,
            "parallel_tol": cfg.parallel_tol,
            "section_weight_in_force": cfg.section_weight_in_force,
        },
        "smoothing": smoothing_info,
        "metrics": metrics,
    }
    return doc


def metrics_block(entries):
    """Serializable metrics list from (label, MetricEntry, row) triples."""
    return [
        {
            "id": label,
            "rel_l2": m.rel_l2,
            "angle_rad": m.angle_rad,
            "angle_deg": m.angle_deg,
            "angle_defined": m.angle_defined,
            "pos_diff_m": m.pos_diff,
            "pos_diff_mm": m.pos_diff * 1e3 if math.isfinite(m.pos_diff) else None,
            "row": row,
        }
        for label, m, row in entries
    ]
