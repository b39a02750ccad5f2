"""Rod geometry, internal stiffness torques, elastic energy.

This is the shared substrate: the equilibrium simulator drives the energy
gradient to zero, and the force estimator reads the per-piece stiffness
torques back off an observed shape.  Both must use the *same* discrete model,
otherwise the static-balance identities the estimator relies on only hold
approximately.

Model: isotropic bending via the discrete curvature binormal plus uniform
twist from prescribed per-edge angles.  No anisotropy, no parallel transport
machinery; twist angles default to zero everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import AntiParallelEdges, DegenerateEdge, DoubleAugmentation

# Edges shorter than this (meters) are duplicate detections, not geometry.
DEGENERATE_EPS = 1e-9

# Relative floor for |e1||e2| + e1.e2; below it the pair is a 180-degree kink.
ANTI_PARALLEL_EPS = 1e-9


def _as_readonly(arr, shape=None) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    if shape is not None and out.shape != shape:
        raise ValueError(f"expected shape {shape}, got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RodState:
    """Geometric and material snapshot of a discretized rod.

    ``nodes`` holds the n+1 vertex positions in meters; ``bend_stiffness``
    (EI, N m^2) and ``twist_stiffness`` (GJ, N m^2) are uniform along the rod;
    ``wpp`` is the weight vector carried by each piece (N); ``rest_lengths``
    defaults to the as-built edge lengths; ``twist_angles`` is the per-edge
    material rotation (rad), zero unless a twist sensor fills it in.
    """

    nodes: np.ndarray
    bend_stiffness: float
    twist_stiffness: float
    wpp: np.ndarray
    rest_lengths: np.ndarray = None  # type: ignore[assignment]
    twist_angles: np.ndarray = None  # type: ignore[assignment]
    wpp_axis_check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        nodes = _as_readonly(self.nodes)
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise ValueError("nodes must be (n+1, 3)")
        if not np.isfinite(nodes).all():
            raise ValueError("nodes must be finite")
        n = nodes.shape[0] - 1
        if n < 4:
            raise ValueError(f"need at least 4 pieces, got {n}")
        lengths = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
        if np.any(lengths < DEGENERATE_EPS):
            raise DegenerateEdge(
                f"edge {int(np.argmin(lengths))} shorter than {DEGENERATE_EPS} m"
            )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "wpp", _as_readonly(self.wpp, (3,)))
        if self.wpp_axis_check and np.count_nonzero(self.wpp) > 1:
            raise ValueError(
                "wpp must point along a single world axis "
                "(pass wpp_axis_check=False for rotated frames)"
            )
        rest = lengths if self.rest_lengths is None else self.rest_lengths
        object.__setattr__(self, "rest_lengths", _as_readonly(rest, (n,)))
        if np.any(self.rest_lengths <= 0.0):
            raise ValueError("rest_lengths must be positive")
        twist = np.zeros(n) if self.twist_angles is None else self.twist_angles
        object.__setattr__(self, "twist_angles", _as_readonly(twist, (n,)))
        if float(self.bend_stiffness) < 0 or float(self.twist_stiffness) < 0:
            raise ValueError("stiffnesses must be nonnegative")

    @property
    def piece_count(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def total_rest_length(self) -> float:
        return float(np.sum(self.rest_lengths))

    def with_nodes(self, nodes) -> "RodState":
        return replace(self, nodes=np.asarray(nodes, dtype=np.float64))

    def voronoi_lengths(self) -> np.ndarray:
        """Rest length owned by each interior vertex (n-1 values)."""
        r = self.rest_lengths
        return 0.5 * (r[:-1] + r[1:])

    def piece_midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])


@dataclass(frozen=True, eq=False)
class StiffnessTorques:
    """Per-piece net torque from the neighbouring pieces' bending and twist.

    ``c[i]`` is the moment exerted on piece i across its two boundary
    vertices.  ``gravity_included`` flips once the weight lever terms are
    folded in; the estimator consumes only the augmented form.
    """

    c: np.ndarray
    gravity_included: bool = False

    def __post_init__(self):
        object.__setattr__(self, "c", _as_readonly(self.c))
        if self.c.ndim != 2 or self.c.shape[1] != 3:
            raise ValueError("c must be (n, 3)")


def compute_edges(rod: RodState) -> np.ndarray:
    """Edge vectors e_i = x_{i+1} - x_i, validated against duplicates."""
    e = np.diff(rod.nodes, axis=0)
    norms = np.linalg.norm(e, axis=1)
    if np.any(norms < DEGENERATE_EPS):
        raise DegenerateEdge(
            f"edge {int(np.argmin(norms))} shorter than {DEGENERATE_EPS} m"
        )
    return e


def curvature_binormal(e_prev, e_next) -> np.ndarray:
    """Discrete curvature binormal 2 (e_prev x e_next) / (|e_prev||e_next| + e_prev.e_next).

    Zero for parallel edges; raises for a fold-back, where the denominator
    vanishes and the discrete curvature is unbounded.
    """
    e_prev = np.asarray(e_prev, dtype=np.float64)
    e_next = np.asarray(e_next, dtype=np.float64)
    scale = np.linalg.norm(e_prev) * np.linalg.norm(e_next)
    if scale < DEGENERATE_EPS**2:
        raise DegenerateEdge("zero-length edge at curvature evaluation")
    denom = scale + float(np.dot(e_prev, e_next))
    if denom <= ANTI_PARALLEL_EPS * scale:
        raise AntiParallelEdges("adjacent edges fold back on each other")
    return 2.0 * np.cross(e_prev, e_next) / denom


def _vertex_twist_moments(rod: RodState, edges: np.ndarray) -> np.ndarray:
    """Twist moment at each vertex, along the averaged unit tangent.

    Shaped (n+1, 3) with zero end rows, matching the bending moments layout.
    """
    out = np.zeros_like(rod.nodes)
    if rod.twist_stiffness == 0.0 or not np.any(rod.twist_angles):
        return out
    units = edges / np.linalg.norm(edges, axis=1, keepdims=True)
    tangents = units[:-1] + units[1:]
    tnorm = np.linalg.norm(tangents, axis=1)
    dtheta = np.diff(rod.twist_angles)
    lbar = rod.voronoi_lengths()
    out[1:-1] = (rod.twist_stiffness * dtheta / (lbar * tnorm))[:, None] * tangents
    return out


def _validate_folds(edges: np.ndarray):
    lc = np.linalg.norm(edges, axis=1)
    denom = lc[:-1] * lc[1:] + np.einsum("ij,ij->i", edges[:-1], edges[1:])
    if np.any(denom <= ANTI_PARALLEL_EPS * lc[:-1] * lc[1:]):
        raise AntiParallelEdges(
            f"fold-back at vertex {int(np.argmin(denom)) + 1}"
        )


def internal_stiffness_torques(rod: RodState) -> StiffnessTorques:
    """Net bending+twist torque applied on each piece by its neighbours.

    At each interior vertex the energy-conjugate moment acts with opposite
    signs on the two incident pieces, so ``c[i]`` is the difference of the
    vertex moments at the piece's far and near ends.  Equivalently
    ``c[i] = -e_i x dE/de_i``: the torques are exactly what a rigid rotation
    of piece i costs in elastic energy, which is the property the
    static-balance estimator needs.
    """
    edges = compute_edges(rod)
    _validate_folds(edges)
    _, _, moments = kernels.bend_state(
        rod.nodes, rod.rest_lengths, rod.bend_stiffness
    )
    moments = moments + _vertex_twist_moments(rod, edges)
    return StiffnessTorques(c=moments[1:] - moments[:-1], gravity_included=False)


def augment_gravity(torques: StiffnessTorques, rod: RodState) -> StiffnessTorques:
    """Fold per-piece weight levers into the stiffness torques.

    Adds ``((n - i - 0.5) e_i) x wpp`` to ``c[i]``: the weight hanging beyond
    piece i is transmitted through the shared node at lever ``e_i``, plus the
    piece's own weight at its midpoint.  With weight lumped half-and-half onto
    piece end nodes this lever count is exact, not an approximation.
    """
    if torques.gravity_included:
        raise DoubleAugmentation("gravity already included in these torques")
    n = rod.piece_count
    edges = compute_edges(rod)
    levers = (n - np.arange(n) - 0.5)[:, None] * edges
    return StiffnessTorques(
        c=torques.c + np.cross(levers, np.broadcast_to(rod.wpp, (n, 3))),
        gravity_included=True,
    )


def elastic_energy(rod: RodState) -> float:
    """Bending plus twist energy (J); zero iff straight and twist-free."""
    edges = compute_edges(rod)
    _validate_folds(edges)
    bend, _, _ = kernels.bend_state(rod.nodes, rod.rest_lengths, rod.bend_stiffness)
    dtheta = np.diff(rod.twist_angles)
    twist = float(
        np.sum(rod.twist_stiffness / (2.0 * rod.voronoi_lengths()) * dtheta**2)
    )
    return float(bend) + twist
