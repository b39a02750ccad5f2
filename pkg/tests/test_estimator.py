"""Consistency conditions, window solves, classification, force recovery."""

import numpy as np
import pytest

from rodforce.core import (
    RodState,
    StiffnessTorques,
    augment_gravity,
    compute_edges,
    internal_stiffness_torques,
)
from rodforce.errors import (
    InconsistentSection,
    NoUndisturbedSection,
    ZeroForceSection,
)
from rodforce.estimator import (
    D,
    UD,
    EstimatorConfig,
    classify_sections,
    compute_metrics,
    condition_a,
    estimate_section_forces,
    format_report_row,
    global_balance,
    resolve_disturbance,
    run_estimation,
    solve_window_force,
)
from rodforce.simulator import (
    AppliedForce,
    SolverParams,
    hanging_wire_scenario,
    relax_to_equilibrium,
)

CFG = EstimatorConfig()


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


class TestConditionA:
    def test_straight_weightless_rod(self):
        value, ok = condition_a(
            (1, 0, 0), (1, 0, 0), (0, 0, 0), (0, 0, 0), CFG
        )
        assert value == 0.0 and ok

    def test_consistent_on_gravity_equilibrium(self, gravity_equilibrium):
        _, result = gravity_equilibrium
        rod = result.rod
        torques = augment_gravity(internal_stiffness_torques(rod), rod)
        edges = compute_edges(rod)
        for i in range(rod.piece_count - 1):
            value, ok = condition_a(
                edges[i], edges[i + 1], torques.c[i], torques.c[i + 1], CFG
            )
            scale = (
                np.linalg.norm(edges[i]) * np.linalg.norm(torques.c[i + 1])
                + np.linalg.norm(edges[i + 1]) * np.linalg.norm(torques.c[i])
                + 1e-9
            )
            assert abs(value) / scale <= 1e-6
            assert ok

    def test_insufficiency_counterexample(self):
        # A force in the plane of the two edges plus a torque perpendicular
        # to the second edge fools the pairwise test: both triple products
        # vanish even though piece i is disturbed.  A width-3 window is not
        # fooled.  This is the reason the window test exists.
        e_i = np.array([1.0, 0.0, 0.0])
        e_ip1 = np.array([0.8, 0.6, 0.0])
        e_ip2 = np.array([0.6, 0.55, 0.35])
        f_beyond = np.array([0.4, -0.2, 0.9])
        f_c = 0.7 * e_i + 0.5 * e_ip1          # in span(e_i, e_ip1)
        tau_c = np.cross(e_ip1, (0.3, 0.8, -0.2))  # perpendicular to e_ip1
        a = 0.4 * e_i
        c_i = -(np.cross(e_i, f_beyond) + np.cross(a, f_c) + tau_c)
        c_ip1 = -np.cross(e_ip1, f_beyond)
        c_ip2 = -np.cross(e_ip2, f_beyond)

        value, ok = condition_a(e_i, e_ip1, c_i, c_ip1, CFG)
        assert ok, f"pairwise test should pass, value={value}"

        _, rel_residual, well_posed = solve_window_force(
            e_i, e_ip1, e_ip2, c_i, c_ip1, c_ip2, CFG
        )
        assert well_posed
        assert rel_residual > CFG.cond_b_rel_tol


class TestWindowSolve:
    def test_zero_torques_zero_force(self):
        f, rel, ok = solve_window_force(
            (1, 0, 0), (0, 1, 0), (0, 0, 1),
            (0, 0, 0), (0, 0, 0), (0, 0, 0), CFG,
        )
        assert np.allclose(f, 0.0) and rel == 0.0 and ok

    def test_forward_constructed_recovery(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            edges = rng.normal(0, 1, (3, 3))
            a = np.vstack([edges])
            force = rng.normal(0, 2, 3)
            torques = -np.cross(edges, force)
            f, rel, ok = solve_window_force(*edges, *torques, CFG)
            if not ok:
                continue
            assert np.linalg.norm(f - force) <= 1e-10 * max(
                1.0, np.linalg.norm(force)
            )
            assert rel <= 1e-10

    def test_parallel_edges_flagged(self):
        f, rel, ok = solve_window_force(
            (1, 0, 0), (2, 0, 0), (0.5, 0, 0),
            (0, 0.1, 0), (0, 0.2, 0), (0, 0.05, 0), CFG,
        )
        assert not ok

    def test_normal_equations_agreement(self):
        # Independent minimizer: ridge-regularized normal equations.
        rng = np.random.default_rng(22)
        checked = 0
        while checked < 200:
            edges = rng.normal(0, 1, (3, 3))
            torques = rng.normal(0, 0.5, (3, 3))
            f, _, ok = solve_window_force(*edges, *torques, CFG)
            if not ok:
                continue
            a = np.vstack(
                [
                    np.array(
                        [
                            [0, -e[2], e[1]],
                            [e[2], 0, -e[0]],
                            [-e[1], e[0], 0],
                        ]
                    )
                    for e in edges
                ]
            )
            c = -torques.reshape(-1)
            ref = np.linalg.solve(a.T @ a + 1e-12 * np.eye(3), a.T @ c)
            assert np.linalg.norm(f - ref) <= 1e-8 * max(1.0, np.linalg.norm(ref))
            checked += 1


class TestClassification:
    def test_gravity_only_single_interior_section(self, gravity_equilibrium):
        _, result = gravity_equilibrium
        labeling, _, _ = run_estimation(result.rod)[0:3]
        kinds = [(s.kind, s.first_piece, s.last_piece) for s in labeling.sections]
        n = result.rod.piece_count
        assert kinds == [(D, 0, 0), (UD, 1, n - 2), (D, n - 1, n - 1)]

    def test_midspan_force_labeling(self, midspan_equilibrium):
        _, result, _ = midspan_equilibrium
        labeling, _, _ = run_estimation(result.rod)
        kinds = [(s.kind, s.first_piece, s.last_piece) for s in labeling.sections]
        assert (D, 14, 14) in kinds
        assert len([k for k in kinds if k[0] == UD]) == 2

    def test_sections_tile_and_alternate(self, midspan_equilibrium):
        _, result, _ = midspan_equilibrium
        labeling, _, _ = run_estimation(result.rod)
        cursor = 0
        previous = None
        for s in labeling.sections:
            assert s.first_piece == cursor
            assert s.kind != previous
            previous = s.kind
            cursor = s.last_piece + 1
        assert cursor == result.rod.piece_count
        assert sum(s.width for s in labeling.sections) == result.rod.piece_count

    def test_requires_gravity_augmentation(self, gravity_equilibrium):
        _, result = gravity_equilibrium
        raw = internal_stiffness_torques(result.rod)
        with pytest.raises(ValueError):
            classify_sections(result.rod, raw, CFG)

    def test_minimum_rod_width(self):
        # Four pieces is the floor: a 3-piece chain cannot even be built,
        # and a 4-piece rod classifies (one window, clamp-seeded ends).
        small = np.zeros((4, 3))
        small[:, 0] = np.arange(4)
        small[1, 1] = 0.05
        with pytest.raises(ValueError):
            RodState(small, 1, 1, (0, 0, 0))
        nodes = np.zeros((5, 3))
        nodes[:, 0] = np.arange(5) * 0.1
        nodes[2, 2] = 0.02
        rod = RodState(nodes, 1.0, 1.0, (0, 0, 0))
        torques = StiffnessTorques(np.zeros((4, 3)), gravity_included=True)
        labeling = classify_sections(rod, torques, CFG)
        assert sum(s.width for s in labeling.sections) == 4

    def test_fully_disturbed_raises(self):
        # Random torques consistent with no constant resultant anywhere.
        rng = np.random.default_rng(30)
        nodes = np.zeros((11, 3))
        nodes[:, 0] = np.arange(11) * 0.1
        nodes[:, 2] = 0.05 * np.sin(np.arange(11))
        rod = RodState(nodes, 1.0, 1.0, (0, 0, 0))
        torques = StiffnessTorques(
            rng.normal(0, 1, (10, 3)), gravity_included=True
        )
        with pytest.raises(NoUndisturbedSection):
            classify_sections(rod, torques, CFG)


class TestForceEstimation:
    def test_identical_neighbours_weightless(self):
        # Hand-built labeling: equal resultants around a disturbed section
        # of a weightless rod give a zero disturbance force.
        nodes = np.zeros((9, 3))
        nodes[:, 0] = np.arange(9) * 0.1
        nodes[:, 2] = 0.02 * np.array([0, 1, 0, 1, 0, 1, 0, 1, 0])
        rod = RodState(nodes, 1.0, 1.0, (0, 0, 0))
        f_r = np.array([0.3, -0.1, 0.2])
        from rodforce.estimator import Section, SectionLabeling

        labeling = SectionLabeling(
            labels=(D, UD, UD, D, D, UD, UD, D),
            sections=(
                Section(D, 0, 0),
                Section(UD, 1, 2, f_r),
                Section(D, 3, 4),
                Section(UD, 5, 6, f_r),
                Section(D, 7, 7),
            ),
            window_residuals=np.zeros(6),
            window_well_posed=np.ones(6, dtype=bool),
        )
        estimates = estimate_section_forces(labeling, rod, CFG)
        middle = [e for e in estimates if not e.boundary][0]
        assert np.allclose(middle.force, 0.0)

    def test_gravity_term_flag(self, gravity_equilibrium):
        # With the section-weight convention on, an artificial disturbed
        # section between identical resultants reports exactly its weight.
        _, result = gravity_equilibrium
        rod = result.rod
        from rodforce.estimator import Section, SectionLabeling

        f_r = np.array([0.1, 0.0, -0.2])
        n = rod.piece_count
        labeling = SectionLabeling(
            labels=tuple(
                [D]
                + [UD] * 12
                + [D] * 3
                + [UD] * (n - 17)
                + [D]
            ),
            sections=(
                Section(D, 0, 0),
                Section(UD, 1, 12, f_r),
                Section(D, 13, 15),
                Section(UD, 16, n - 2, f_r),
                Section(D, n - 1, n - 1),
            ),
            window_residuals=np.zeros(n - 2),
            window_well_posed=np.ones(n - 2, dtype=bool),
        )
        cfg = EstimatorConfig(section_weight_in_force=True)
        estimates = estimate_section_forces(labeling, rod, cfg)
        middle = [e for e in estimates if not e.boundary][0]
        assert np.allclose(middle.force, 3 * np.asarray(rod.wpp))

    def test_single_force_weightless_balance(self):
        force = np.array([0.0, 0.3, -0.5])
        scenario = hanging_wire_scenario(
            total_weight=0.0,
            applied_forces=[AppliedForce(14, 0.5, force)],
            solver=SolverParams(force_tolerance=1e-9),
        )
        result = relax_to_equilibrium(scenario)
        labeling, estimates, _ = run_estimation(result.rod)
        interior = [e for e in estimates if not e.boundary]
        assert len(interior) == 1
        assert np.allclose(interior[0].force, force, atol=1e-8)
        clamp_sum = sum(e.force for e in estimates if e.boundary)
        assert np.allclose(clamp_sum, -force, atol=1e-8)

    def test_clamp_estimates_match_true_reactions(self, gravity_equilibrium):
        scenario, result = gravity_equilibrium
        from rodforce.simulator import clamp_reactions

        reactions = clamp_reactions(result, scenario)
        _, estimates, _ = run_estimation(result.rod)
        boundary = [e for e in estimates if e.boundary]
        assert len(boundary) == 2
        assert np.allclose(boundary[0].force, reactions[0], atol=1e-7)
        assert np.allclose(boundary[1].force, reactions[1], atol=1e-7)


class TestResolution:
    def test_zero_torque_recovers_position(self, midspan_equilibrium):
        _, result, force = midspan_equilibrium
        labeling, estimates, torques = run_estimation(
            result.rod, mode="zero-torque"
        )
        interior = [e for e in estimates if not e.boundary][0]
        true_p = 0.5 * (result.rod.nodes[14] + result.rod.nodes[15])
        assert np.linalg.norm(interior.position - true_p) <= 1e-8
        assert interior.residual <= 1e-9

    def test_known_position_gives_zero_torque(self, midspan_equilibrium):
        _, result, force = midspan_equilibrium
        rod = result.rod
        true_p = 0.5 * (rod.nodes[14] + rod.nodes[15])
        labeling, estimates, torques = run_estimation(
            rod, mode="known-position", known_positions=[true_p]
        )
        interior = [e for e in estimates if not e.boundary][0]
        assert interior.mode == "known-position"
        assert np.abs(interior.torque).max() <= 1e-8

    def test_midpoint_symmetric_load(self):
        # Symmetric vertical midspan load on an odd-piece rod: the mass
        # center of the disturbed section is the true application point.
        force = np.array([0.0, 0.0, -0.4])
        scenario = hanging_wire_scenario(
            pieces=31,
            applied_forces=[AppliedForce(15, 0.5, force)],
            solver=SolverParams(force_tolerance=1e-9),
        )
        result = relax_to_equilibrium(scenario)
        labeling, estimates, _ = run_estimation(result.rod, mode="midpoint")
        interior = [e for e in estimates if not e.boundary][0]
        true_p = 0.5 * (result.rod.nodes[15] + result.rod.nodes[16])
        assert np.linalg.norm(interior.position - true_p) <= 1e-6

    def test_zero_force_section_raises(self, gravity_equilibrium):
        _, result = gravity_equilibrium
        rod = result.rod
        from rodforce.estimator import Section, SectionLabeling

        n = rod.piece_count
        f_r = np.array([0.05, 0.0, -0.02])
        labeling = SectionLabeling(
            labels=tuple([D] + [UD] * 12 + [D] * 3 + [UD] * (n - 17) + [D]),
            sections=(
                Section(D, 0, 0),
                Section(UD, 1, 12, f_r),
                Section(D, 13, 15),
                Section(UD, 16, n - 2, f_r),
                Section(D, n - 1, n - 1),
            ),
            window_residuals=np.zeros(n - 2),
            window_well_posed=np.ones(n - 2, dtype=bool),
        )
        torques = augment_gravity(internal_stiffness_torques(rod), rod)
        with pytest.raises(ZeroForceSection):
            resolve_disturbance(labeling, rod, torques, 2, "zero-torque", CFG)

    def test_parallel_torque_residual_rejected(self):
        # Hand-built section whose balance torque is parallel to its force:
        # the cross-product position solve has no perpendicular content.
        nodes = np.zeros((9, 3))
        nodes[:, 0] = np.arange(9) * 0.1
        nodes[:, 2] = 0.02 * np.array([0, 1, 0, 1, 0, 1, 0, 1, 0])
        rod = RodState(nodes, 1.0, 1.0, (0, 0, 0))
        from rodforce.estimator import Section, SectionLabeling

        f_r_before = np.array([1.0, 0.0, 0.0])
        f_r_after = np.array([0.0, 0.0, 0.0])
        labeling = SectionLabeling(
            labels=(D, UD, UD, UD, D, UD, UD, D),
            sections=(
                Section(D, 0, 0),
                Section(UD, 1, 3, f_r_before),
                Section(D, 4, 4),
                Section(UD, 5, 6, f_r_after),
                Section(D, 7, 7),
            ),
            window_residuals=np.zeros(6),
            window_well_posed=np.ones(6, dtype=bool),
        )
        # Zero downstream resultant and a torque stack purely along the
        # section force (+x): c sums to something parallel to f.
        c = np.zeros((8, 3))
        c[4] = (0.5, 0.0, 0.0)
        torques = StiffnessTorques(c, gravity_included=True)
        with pytest.raises(InconsistentSection):
            resolve_disturbance(labeling, rod, torques, 2, "zero-torque", CFG)

    def test_boundary_zero_torque_finds_clamp(self, gravity_equilibrium):
        # Position-only clamps exert no moment, so solving the boundary
        # section in zero-torque mode must land on the clamp node itself.
        scenario, result = gravity_equilibrium
        _, estimates, _ = run_estimation(result.rod, mode="zero-torque")
        boundary = [e for e in estimates if e.boundary]
        assert np.linalg.norm(
            boundary[0].position - scenario.clamps[0].position
        ) <= 1e-6
        assert np.linalg.norm(
            boundary[1].position - scenario.clamps[1].position
        ) <= 1e-6


class TestFrameEquivariance:
    def test_rotation_maps_everything(self, midspan_equilibrium):
        _, result, force = midspan_equilibrium
        rod = result.rod
        rot = rotation_matrix((0.3, 1.0, -0.2), 1.1)
        shift = np.array([0.4, -1.0, 0.25])
        moved = RodState(
            np.asarray(rod.nodes) @ rot.T + shift,
            rod.bend_stiffness,
            rod.twist_stiffness,
            rot @ np.asarray(rod.wpp),
            rest_lengths=rod.rest_lengths,
            wpp_axis_check=False,
        )
        lab_a, est_a, _ = run_estimation(rod, mode="zero-torque")
        lab_b, est_b, _ = run_estimation(moved, mode="zero-torque")
        assert lab_a.labels == lab_b.labels
        for sa, sb in zip(lab_a.sections, lab_b.sections):
            if sa.f_r is not None:
                assert np.allclose(rot @ sa.f_r, sb.f_r, atol=1e-9)
        for ea, eb in zip(est_a, est_b):
            assert np.allclose(rot @ ea.force, eb.force, atol=1e-9)
            if ea.position is not None:
                assert np.allclose(
                    rot @ ea.position + shift, eb.position, atol=1e-8
                )


class TestMetrics:
    def test_identity(self):
        m = compute_metrics((1, 2, 3), (1, 2, 3), (0, 0, 0), (0, 0, 0))
        assert m.rel_l2 <= 1e-9
        assert m.angle_rad <= 1e-6
        assert m.pos_diff == 0.0

    def test_orthogonal_unit_vectors(self):
        # The epsilon guard in the denominator shifts the exact sqrt(2) by
        # one part in 1e9.
        m = compute_metrics((1, 0, 0), (0, 1, 0))
        assert m.rel_l2 == pytest.approx(np.sqrt(2.0), rel=1e-8)
        assert m.angle_deg == pytest.approx(90.0, abs=1e-9)

    def test_zero_vector_angle_undefined(self):
        m = compute_metrics((1, 0, 0), (0, 0, 0))
        assert not m.angle_defined
        assert np.isnan(m.angle_rad)

    def test_report_row_format(self):
        # Matches the published table layout: id, rel L2, angle, mm.
        from rodforce.estimator import MetricEntry

        m = MetricEntry(
            rel_l2=0.1364,
            angle_rad=np.radians(0.1176),
            angle_deg=0.1176,
            angle_defined=True,
            pos_diff=6e-7,
        )
        assert format_report_row("A2", m) == "A2: 0.1364, 0.1176, 0.0006 mm"


class TestGlobalBalanceReport:
    def test_balance_zero_on_oracle(self, midspan_equilibrium):
        _, result, _ = midspan_equilibrium
        labeling, estimates, _ = run_estimation(result.rod)
        balance = global_balance(estimates, labeling, result.rod)
        assert np.abs(balance).max() <= 1e-6

    def test_balance_with_section_weight_convention(self, midspan_equilibrium):
        _, result, _ = midspan_equilibrium
        cfg = EstimatorConfig(section_weight_in_force=True)
        labeling, estimates, _ = run_estimation(result.rod, cfg)
        balance = global_balance(estimates, labeling, result.rod, cfg)
        assert np.abs(balance).max() <= 1e-6
