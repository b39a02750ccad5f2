"""Interactive probing service.

One WebSocket endpoint speaks a small JSON frame protocol; every mutation
re-relaxes the rod, re-estimates, bumps the revision and pushes a full
``state_update`` to all clients, so a snapshot is always internally
consistent (nodes, actual forces, and estimates all come from the same
revision).  A heartbeat re-sends the latest snapshot at idle.

Client frames:
    {"type": "apply_force", "piece": int, "r": float, "force": [x, y, z]}
    {"type": "clear_forces"}
    {"type": "set_config", "estimator": {...}, "mode": "zero-torque"}
    {"type": "ping"}

Server frames: ``state_update``, ``error`` (non-fatal, per message), ``pong``.
"""

from __future__ import annotations

import asyncio
import logging
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from .errors import RodForceError
from .estimator import (
    EstimatorConfig,
    compute_metrics,
    global_balance,
    run_estimation,
)
from .simulator import SimScenario, SimSession, clamp_reactions

log = logging.getLogger("rodforce.server")

PLACEHOLDER = """<!doctype html>
<html><head><title>rodforce</title></head>
<body><h1>rodforce session</h1>
<p>No viewer assets were supplied (run with --assets &lt;dir&gt;).
The WebSocket protocol lives at <code>/ws</code>.</p></body></html>
"""


class Session:
    """Single-owner state: scenario, latest equilibrium, latest estimates."""

    def __init__(self, scenario: SimScenario, cfg: EstimatorConfig):
        self.sim = SimSession(scenario)
        self.cfg = cfg
        self.mode = "zero-torque"
        self.revision = 0
        self.state: Optional[dict] = None

    def refresh(self) -> dict:
        result = self.sim.latest or self.sim.relax()
        rod = result.rod
        scenario = self.sim.scenario
        reactions = clamp_reactions(result, scenario)
        actual = []
        for f in scenario.applied_forces:
            anchor = rod.nodes[f.piece]
            position = anchor + f.ratio * (rod.nodes[f.piece + 1] - anchor)
            actual.append(
                {
                    "piece": int(f.piece),
                    "r": float(f.ratio),
                    "force": [float(v) for v in f.force],
                    "position": [float(v) for v in position],
                }
            )
        estimates_doc = []
        metrics_doc = []
        try:
            labeling, estimates, _ = run_estimation(rod, self.cfg, mode=self.mode)
            balance = global_balance(estimates, labeling, rod, self.cfg)
            for e in estimates:
                estimates_doc.append(
                    {
                        "section_index": int(e.section_index),
                        "first_piece": int(e.first_piece),
                        "last_piece": int(e.last_piece),
                        "boundary": bool(e.boundary),
                        "force": [float(v) for v in e.force],
                        "mode": e.mode,
                        "position": None
                        if e.position is None
                        else [float(v) for v in e.position],
                        "torque": None
                        if e.torque is None
                        else [float(v) for v in e.torque],
                        "residual": float(e.residual),
                    }
                )
            interior = [e for e in estimates if not e.boundary]
            if actual and interior:
                # Paper-style live readout: largest actual vs largest estimate.
                big = max(actual, key=lambda a: float(np.linalg.norm(a["force"])))
                match = max(
                    interior, key=lambda e: float(np.linalg.norm(e.force))
                )
                m = compute_metrics(
                    np.asarray(big["force"]),
                    match.force,
                    np.asarray(big["position"]),
                    match.position,
                )
                metrics_doc.append(
                    {
                        "id": "largest",
                        "rel_l2": m.rel_l2,
                        "angle_rad": m.angle_rad,
                        "angle_deg": m.angle_deg,
                        "angle_defined": m.angle_defined,
                        "pos_diff_m": m.pos_diff,
                    }
                )
            balance_doc = {
                "residual": [float(v) for v in balance],
                "inf_norm": float(np.abs(balance).max()),
            }
            estimate_error = None
        except RodForceError as exc:
            balance_doc = None
            estimate_error = f"{type(exc).__name__}: {exc}"
        self.revision += 1
        self.state = {
            "type": "state_update",
            "revision": self.revision,
            "converged": bool(result.converged),
            "residual": float(result.residual_force_inf_norm),
            "energy": float(result.energy),
            "nodes": [[float(v) for v in row] for row in rod.nodes],
            "clamps": [
                {
                    "node": int(c.node),
                    "position": [float(v) for v in c.position],
                    "reaction": [float(v) for v in r],
                }
                for c, r in zip(scenario.clamps, reactions)
            ],
            "actual_forces": actual,
            "estimates": estimates_doc,
            "estimate_error": estimate_error,
            "metrics": metrics_doc,
            "balance": balance_doc,
        }
        return self.state


def create_app(
    scenario: SimScenario,
    cfg: Optional[EstimatorConfig] = None,
    assets_dir: Optional[str] = None,
    heartbeat: float = 15.0,
) -> FastAPI:
    session = Session(scenario, cfg or EstimatorConfig())
    lock = asyncio.Lock()
    clients: set[WebSocket] = set()

    async def broadcast(state: dict):
        dead = []
        for ws in clients:
            try:
                await ws.send_json(state)
            except Exception:
                dead.append(ws)
        for ws in dead:
            clients.discard(ws)

    async def heartbeat_loop():
        while True:
            await asyncio.sleep(heartbeat)
            if session.state is not None and clients:
                await broadcast(session.state)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        async with lock:
            await asyncio.to_thread(session.refresh)
        task = asyncio.create_task(heartbeat_loop())
        yield
        task.cancel()

    app = FastAPI(lifespan=lifespan)

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        clients.add(ws)
        try:
            if session.state is not None:
                await ws.send_json(session.state)
            while True:
                try:
                    message = await ws.receive_json()
                except WebSocketDisconnect:
                    raise
                except Exception:
                    await ws.send_json(
                        {
                            "type": "error",
                            "category": "bad_frame",
                            "message": "frames must be JSON objects",
                        }
                    )
                    continue
                response = await handle(message)
                if response is not None:
                    await ws.send_json(response)
        except WebSocketDisconnect:
            pass
        finally:
            clients.discard(ws)

    async def handle(message) -> Optional[dict]:
        if not isinstance(message, dict) or "type" not in message:
            return {
                "type": "error",
                "category": "bad_frame",
                "message": "missing frame type",
            }
        kind = message["type"]
        if kind == "ping":
            return {"type": "pong", "revision": session.revision}
        try:
            if kind == "apply_force":
                piece = int(message["piece"])
                r = float(message.get("r", 0.5))
                force = np.asarray(message["force"], dtype=np.float64)
                if force.shape != (3,):
                    raise ValueError("force must be a 3-vector")
                async with lock:
                    await asyncio.to_thread(
                        session.sim.perturb_and_resettle, piece, r, force
                    )
                    state = await asyncio.to_thread(session.refresh)
                await broadcast(state)
                return None
            if kind == "clear_forces":
                async with lock:
                    await asyncio.to_thread(session.sim.clear_forces)
                    state = await asyncio.to_thread(session.refresh)
                await broadcast(state)
                return None
            if kind == "set_config":
                async with lock:
                    est = message.get("estimator", {})
                    if est:
                        session.cfg = EstimatorConfig(
                            cond_a_tol=float(
                                est.get("cond_a_tol", session.cfg.cond_a_tol)
                            ),
                            cond_b_rel_tol=float(
                                est.get(
                                    "cond_b_rel_tol", session.cfg.cond_b_rel_tol
                                )
                            ),
                            svd_rank_tol=float(
                                est.get("svd_rank_tol", session.cfg.svd_rank_tol)
                            ),
                            parallel_tol=float(
                                est.get("parallel_tol", session.cfg.parallel_tol)
                            ),
                            section_weight_in_force=bool(
                                est.get(
                                    "section_weight_in_force",
                                    session.cfg.section_weight_in_force,
                                )
                            ),
                        )
                    if "mode" in message:
                        mode = str(message["mode"])
                        if mode not in ("zero-torque", "midpoint"):
                            raise ValueError(f"unsupported mode {mode!r}")
                        session.mode = mode
                    state = await asyncio.to_thread(session.refresh)
                await broadcast(state)
                return None
        except (KeyError, TypeError, ValueError) as exc:
            return {
                "type": "error",
                "category": "bad_message",
                "message": str(exc),
            }
        except RodForceError as exc:
            log.warning("mutation failed: %s", exc)
            return {
                "type": "error",
                "category": "solver",
                "message": f"{type(exc).__name__}: {exc}",
            }
        return {
            "type": "error",
            "category": "unknown_type",
            "message": f"unknown frame type {kind!r}",
        }

    # Static assets mount last so /ws keeps priority; html=True serves
    # index.html at / with its relative js/ and vendor/ paths intact.
    if assets_dir and Path(assets_dir).is_dir():
        app.mount(
            "/", StaticFiles(directory=assets_dir, html=True), name="assets"
        )
    else:

        @app.get("/")
        async def root_placeholder():
            return HTMLResponse(PLACEHOLDER)

    app.state.session = session
    return app
