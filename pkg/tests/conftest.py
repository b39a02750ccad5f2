"""Shared fixtures and independent oracles used across test modules."""

import numpy as np
import pytest

from rodforce.core import RodState, elastic_energy
from rodforce.simulator import (
    AppliedForce,
    SolverParams,
    hanging_wire_scenario,
    relax_to_equilibrium,
)

TIGHT = SolverParams(force_tolerance=1e-9)


def rotation_matrix(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [
            [0, -axis[2], axis[1]],
            [axis[2], 0, -axis[0]],
            [-axis[1], axis[0], 0],
        ]
    )
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def rod_from_edges(origin, edges, reference: RodState) -> RodState:
    nodes = np.vstack([origin, origin + np.cumsum(edges, axis=0)])
    return RodState(
        nodes,
        reference.bend_stiffness,
        reference.twist_stiffness,
        reference.wpp,
        rest_lengths=reference.rest_lengths,
        twist_angles=reference.twist_angles,
        wpp_axis_check=False,
    )


def fd_piece_torques(rod: RodState, h=1e-6) -> np.ndarray:
    """Independent oracle for the per-piece stiffness torques.

    Rotates each piece (as its own rigid edge) about its midpoint and
    central-differences the elastic energy; the negative gradient per axis
    is the net elastic torque on that piece.
    """
    edges = np.diff(np.asarray(rod.nodes), axis=0)
    out = np.zeros_like(edges)
    for i in range(edges.shape[0]):
        for ax in range(3):
            axis = np.zeros(3)
            axis[ax] = 1.0
            plus = edges.copy()
            plus[i] = rotation_matrix(axis, h) @ edges[i]
            minus = edges.copy()
            minus[i] = rotation_matrix(axis, -h) @ edges[i]
            e_plus = elastic_energy(rod_from_edges(rod.nodes[0], plus, rod))
            e_minus = elastic_energy(rod_from_edges(rod.nodes[0], minus, rod))
            out[i, ax] = -(e_plus - e_minus) / (2.0 * h)
    return out


@pytest.fixture(scope="session")
def gravity_equilibrium():
    """Sagging wire, no applied forces; the reference oracle state."""
    scenario = hanging_wire_scenario(solver=TIGHT)
    return scenario, relax_to_equilibrium(scenario)


@pytest.fixture(scope="session")
def midspan_equilibrium(gravity_equilibrium):
    """Same wire with a 0.89 N oblique force at midspan (piece 14, r=0.5)."""
    _, base = gravity_equilibrium
    force = np.array([0.0, 0.4, -0.8])
    scenario = hanging_wire_scenario(
        applied_forces=[AppliedForce(14, 0.5, force)], solver=TIGHT
    )
    result = relax_to_equilibrium(scenario, initial_nodes=base.rod.nodes)
    return scenario, result, force


def random_rod_nodes(rng, pieces=10, scale=0.05, min_turn_guard=True):
    """Random open polyline with no folds (for geometry property tests)."""
    while True:
        steps = rng.normal(0.0, scale, (pieces, 3))
        lengths = np.linalg.norm(steps, axis=1)
        if np.any(lengths < 1e-4):
            continue
        nodes = np.vstack([np.zeros(3), np.cumsum(steps, axis=0)])
        e = np.diff(nodes, axis=0)
        lc = np.linalg.norm(e, axis=1)
        denom = lc[:-1] * lc[1:] + np.einsum("ij,ij->i", e[:-1], e[1:])
        if min_turn_guard and np.any(denom < 1e-2 * lc[:-1] * lc[1:]):
            continue
        return nodes
