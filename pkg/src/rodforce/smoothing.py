"""Observation smoothing and resampling ahead of estimation.

Stiffness torques are second differences of the shape, so raw perception
noise dominates them.  The smoothing loop trades the elastic energy removed
from the shape against how far nodes moved from the observation, and stops
at the first step where the trade no longer improves:

    J_i = (E_0 - E_i) - m_p * sum_k |x_k^i - x_k^0|

continuing while J increases.  The operator is a pinned-endpoint uniform
Laplacian pass; the objective, not the operator, controls aggressiveness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import RodState, elastic_energy
from .errors import InsufficientPoints


@dataclass(frozen=True)
class SmoothingParams:
    """Knobs for the energy-displacement trade.

    ``m_p`` (J/m) prices node displacement; ``None`` picks E0 / (0.01 L) so
    one percent of the rod length in summed displacement trades against the
    whole initial energy.  ``lam`` is the Laplacian step weight per pass.
    """

    m_p: Optional[float] = None
    max_steps: int = 200
    lam: float = 0.5
    resample_to: Optional[int] = None

    def __post_init__(self):
        if self.m_p is not None and self.m_p <= 0:
            raise ValueError("m_p must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")
        if self.resample_to is not None and self.resample_to < 4:
            raise ValueError("resample_to must be at least 4")


@dataclass(frozen=True, eq=False)
class SmoothResult:
    rod: RodState
    steps_taken: int
    j_history: tuple = field(default=(), repr=False)
    energy_history: tuple = field(default=(), repr=False)


def _laplacian_pass(points: np.ndarray, lam: float) -> np.ndarray:
    out = points.copy()
    out[1:-1] += 0.5 * lam * (points[:-2] - 2.0 * points[1:-1] + points[2:])
    return out


def smooth(
    points,
    rod_template: RodState,
    params: Optional[SmoothingParams] = None,
) -> SmoothResult:
    """Smooth observed points until the energy-displacement trade turns.

    ``rod_template`` supplies the stiffness (and weight) used to evaluate
    the shape's elastic energy; rest lengths are taken from the observation
    itself since a detected wire is treated as inextensible.  Endpoints
    never move.  Returns the shape of the last improving iteration together
    with the J diagnostics sequence.
    """
    params = params or SmoothingParams()
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 5:
        raise InsufficientPoints(
            f"need at least 5 ordered 3D points, got {pts.shape}"
        )

    def build(p):
        return RodState(
            p,
            rod_template.bend_stiffness,
            rod_template.twist_stiffness,
            rod_template.wpp,
            wpp_axis_check=False,
        )

    original = pts.copy()
    e0 = elastic_energy(build(original))
    m_p = params.m_p
    if m_p is None:
        length = float(
            np.sum(np.linalg.norm(np.diff(original, axis=0), axis=1))
        )
        m_p = e0 / (0.01 * length) if e0 > 0 else 1.0

    best = original
    j_prev = 0.0
    j_history = [0.0]
    energy_history = [e0]
    steps = 0
    current = original
    for _ in range(params.max_steps):
        candidate = _laplacian_pass(current, params.lam)
        e_i = elastic_energy(build(candidate))
        p_smooth = float(
            np.sum(np.linalg.norm(candidate - original, axis=1))
        )
        j_i = (e0 - e_i) - m_p * p_smooth
        j_history.append(j_i)
        energy_history.append(e_i)
        if j_i <= j_prev:
            break
        best = candidate
        j_prev = j_i
        steps += 1
        current = candidate

    rod = build(best)
    return SmoothResult(
        rod=rod,
        steps_taken=steps,
        j_history=tuple(j_history),
        energy_history=tuple(energy_history),
    )


def resample(rod: RodState, piece_count: int) -> RodState:
    """Arc-length-uniform resampling of the rod polyline.

    Endpoints are preserved exactly; interior nodes are linearly
    interpolated at equal arc-length stations, so the polyline length is
    preserved up to the chord shortening of the removed corners.
    """
    if piece_count < 4:
        raise ValueError("piece_count must be at least 4")
    nodes = np.asarray(rod.nodes)
    seglen = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    stations = np.concatenate([[0.0], np.cumsum(seglen)])
    total = stations[-1]
    targets = np.linspace(0.0, total, piece_count + 1)
    out = np.column_stack(
        [np.interp(targets, stations, nodes[:, k]) for k in range(3)]
    )
    out[0] = nodes[0]
    out[-1] = nodes[-1]
    return RodState(
        out,
        rod.bend_stiffness,
        rod.twist_stiffness,
        rod.wpp,
        wpp_axis_check=False,
    )
