"""Disturbance detection and estimation from rod shape.

Pipeline: gravity-augmented stiffness torques -> per-window least-squares
force solves (condition B) -> piece labeling into undisturbed/disturbed
sections, refined by the pairwise condition A -> per-section force recovery
-> torque or application-point resolution.

Everything here is a pure function of immutable snapshots; no state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    RodState,
    StiffnessTorques,
    augment_gravity,
    compute_edges,
    internal_stiffness_torques,
)
from .errors import (
    InconsistentSection,
    NoUndisturbedSection,
    RodTooShort,
    UnboundedSection,
    ZeroForceSection,
)

UD = "UD"
D = "D"

# Epsilon guarding norm divisions (N); also the zero-force floor.
FORCE_EPS = 1e-9


@dataclass(frozen=True)
class EstimatorConfig:
    """Thresholds for the consistency tests (all dimensionless).

    ``section_weight_in_force`` adds each disturbed section's own weight
    (pieces x wpp) to its reported force.  Off by default: with the weight
    levers already folded into the torques, the recovered per-section force
    is exactly the applied resultant, and adding the section weight breaks
    the global balance of the report.
    """

    cond_a_tol: float = 1e-3
    cond_b_rel_tol: float = 1e-2
    svd_rank_tol: float = 1e-4
    parallel_tol: float = 1e-3
    section_weight_in_force: bool = False
    # Noisy observations amplify force error along the poorly observed
    # near-tangent direction; raising this truncates that singular direction
    # out of the window solves (well-posedness still gates on svd_rank_tol).
    solve_rank_tol: Optional[float] = None
    # Undisturbed runs narrower than this merge into their disturbed
    # neighbours.  2 is the minimum solvable width; 3 enforces the
    # separation assumption strictly, which pays off on noisy shapes where
    # a thin spurious separator poisons both neighbouring estimates.
    min_ud_width: int = 2

    def __post_init__(self):
        for name in ("cond_a_tol", "cond_b_rel_tol", "svd_rank_tol", "parallel_tol"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.solve_rank_tol is not None and not 0.0 < self.solve_rank_tol < 1.0:
            raise ValueError("solve_rank_tol must lie in (0, 1)")
        if self.min_ud_width < 2:
            raise ValueError("min_ud_width must be at least 2")

    @property
    def effective_solve_tol(self) -> float:
        return self.svd_rank_tol if self.solve_rank_tol is None else self.solve_rank_tol


@dataclass(frozen=True, eq=False)
class Section:
    kind: str
    first_piece: int
    last_piece: int
    f_r: Optional[np.ndarray] = None

    @property
    def width(self) -> int:
        return self.last_piece - self.first_piece + 1


@dataclass(frozen=True, eq=False)
class SectionLabeling:
    labels: tuple
    sections: tuple
    window_residuals: np.ndarray
    window_well_posed: np.ndarray
    window_forces: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        n = len(self.labels)
        cursor = 0
        previous = None
        for s in self.sections:
            if s.first_piece != cursor or s.last_piece < s.first_piece:
                raise ValueError("sections must tile the pieces in order")
            if previous is not None and previous == s.kind:
                raise ValueError("section kinds must alternate")
            if s.kind == UD and s.width < 2:
                raise ValueError("undisturbed sections need at least 2 pieces")
            if s.kind == UD and s.f_r is None:
                raise ValueError("undisturbed sections must carry a recovered force")
            previous = s.kind
            cursor = s.last_piece + 1
        if cursor != n:
            raise ValueError("sections must cover every piece")

    @property
    def ud_piece_count(self) -> int:
        return sum(s.width for s in self.sections if s.kind == UD)


@dataclass(frozen=True, eq=False)
class DisturbanceEstimate:
    """Force attributed to one disturbed section, optionally resolved.

    ``mode`` is one of ``known-position`` (torque computed for a given
    application point), ``zero-torque`` (application point solved assuming no
    external torque) or ``midpoint`` (point pinned at the section's mass
    center, torque left alone).  ``residual`` is the mode's diagnostic: the
    pre-projection distance to the section polyline for ``zero-torque``,
    zero otherwise.  ``orth_residual`` is the magnitude of the torque
    component that had to be discarded for the cross-product solve.
    """

    section_index: int
    first_piece: int
    last_piece: int
    boundary: bool
    force: np.ndarray
    mode: Optional[str] = None
    position: Optional[np.ndarray] = None
    torque: Optional[np.ndarray] = None
    residual: float = 0.0
    orth_residual: float = 0.0


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def condition_a(e_i, e_ip1, c_i, c_ip1, cfg: EstimatorConfig):
    """Pairwise consistency test for adjacent pieces of one section.

    If both pieces carry the same downstream resultant, then
    ``e_i . c_{i+1} + e_{i+1} . c_i`` vanishes by the antisymmetry of the
    triple product.  Necessary but not sufficient: an in-plane force with a
    perpendicular torque on one piece passes it too.
    """
    e_i = np.asarray(e_i, dtype=np.float64)
    e_ip1 = np.asarray(e_ip1, dtype=np.float64)
    c_i = np.asarray(c_i, dtype=np.float64)
    c_ip1 = np.asarray(c_ip1, dtype=np.float64)
    value = float(np.dot(e_i, c_ip1) + np.dot(e_ip1, c_i))
    scale = (
        np.linalg.norm(e_i) * np.linalg.norm(c_ip1)
        + np.linalg.norm(e_ip1) * np.linalg.norm(c_i)
        + FORCE_EPS
    )
    return value, abs(value) <= cfg.cond_a_tol * scale


def _stacked_solve(
    edges: np.ndarray, torques: np.ndarray, rank_tol: float, solve_tol=None
):
    """Least-squares resultant from k pieces' balance equations.

    Stacks the edge cross-product matrices into A (3k x 3) against
    C = -(torques) and solves F* = pinv(A) C through the SVD, zeroing
    singular directions below ``solve_tol`` (default ``rank_tol``) of the
    largest.  ``well_posed`` always gates on ``rank_tol``.
    """
    k = edges.shape[0]
    a = np.vstack([_skew(edges[i]) for i in range(k)])
    c = -torques.reshape(-1)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cut = rank_tol if solve_tol is None else solve_tol
    keep = s >= cut * s[0]
    inv = np.where(keep, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    f_star = vt.T @ (inv * (u.T @ c))
    rel_residual = float(
        np.linalg.norm(a @ f_star - c) / (np.linalg.norm(c) + FORCE_EPS)
    )
    well_posed = bool(s[-1] >= rank_tol * s[0])
    return f_star, rel_residual, well_posed


def solve_window_force(e_i, e_ip1, e_ip2, c_i, c_ip1, c_ip2, cfg: EstimatorConfig):
    """Three-piece window solve (condition B).

    Returns ``(f_star, rel_residual, well_posed)``; ``well_posed`` is false
    when the three edges are (nearly) parallel, where the stacked
    cross-product matrix stays rank 2 and the tangential force component is
    unobservable.
    """
    edges = np.array([e_i, e_ip1, e_ip2], dtype=np.float64)
    torques = np.array([c_i, c_ip1, c_ip2], dtype=np.float64)
    return _stacked_solve(
        edges, torques, cfg.svd_rank_tol, cfg.effective_solve_tol
    )


def _window_table(edges, c, cfg):
    n = edges.shape[0]
    forces = np.zeros((n - 2, 3))
    residuals = np.zeros(n - 2)
    well = np.zeros(n - 2, dtype=bool)
    for i in range(n - 2):
        forces[i], residuals[i], well[i] = _stacked_solve(
            edges[i : i + 3], c[i : i + 3], cfg.svd_rank_tol,
            cfg.effective_solve_tol,
        )
    return forces, residuals, well


def classify_sections(
    rod: RodState, torques: StiffnessTorques, cfg: Optional[EstimatorConfig] = None
) -> SectionLabeling:
    """Partition pieces into alternating undisturbed/disturbed sections.

    A well-posed window fails condition B exactly when it contains a
    disturbed piece, so the disturbed set is recovered as a minimal hitting
    set of the failing windows (greedy interval stabbing keeps disturbed
    sections as tight as the windows allow).  A window may still pass with a
    disturbance inside when the force-jump pattern happens to align with one
    edge direction, which is why attribution leans on the failing windows
    rather than granting every piece of a passing window a pass.  Runs of
    undisturbed pieces are then split wherever the pairwise condition A
    fails.  The first and last pieces are always seeded as disturbed: clamp
    reactions are disturbances by definition, and end reactions act at
    boundary nodes where no balance equation sees them.

    Per undisturbed section the recovered resultant is the mean of the
    window forces fully interior to it (width-2 sections fall back to a
    direct two-piece stacked solve).
    """
    cfg = cfg or EstimatorConfig()
    if not torques.gravity_included:
        raise ValueError("classify_sections needs gravity-augmented torques")
    n = rod.piece_count
    if n < 4:
        raise RodTooShort(f"need at least 4 pieces, got {n}")
    edges = compute_edges(rod)
    c = np.asarray(torques.c)
    forces, residuals, well = _window_table(edges, c, cfg)
    passing = well & (residuals <= cfg.cond_b_rel_tol)
    if not passing.any():
        raise NoUndisturbedSection(
            "no consistency window passed; rod looks entirely disturbed "
            "(check stiffness/weights, shape noise, or that the rod is "
            "near static equilibrium)"
        )

    compatible = np.ones(n, dtype=bool)
    # Pieces no well-posed window can vouch for stay unverified -> disturbed.
    vouched = np.zeros(n, dtype=bool)
    for w in np.flatnonzero(well):
        vouched[w : w + 3] = True
    compatible &= vouched
    # Greedy stabbing of failing windows, ascending == by right endpoint.
    last_stab = -1
    for w in np.flatnonzero(well & ~passing):
        if last_stab >= w:
            continue
        last_stab = w + 2
        compatible[last_stab] = False
    compatible[0] = False
    compatible[n - 1] = False

    # Condition A refinement: break runs across pairs that fail it.
    labels = np.where(compatible, UD, D).astype(object)
    for i in range(n - 1):
        if labels[i] == UD and labels[i + 1] == UD:
            _, ok = condition_a(edges[i], edges[i + 1], c[i], c[i + 1], cfg)
            if not ok:
                labels[i + 1] = D

    # Undisturbed runs below the minimum width are unsolvable (width 1) or
    # below the configured separation floor; fold them into neighbours.
    runs = _runs(labels)
    for kind, first, last in runs:
        if kind == UD and last - first + 1 < cfg.min_ud_width:
            labels[first : last + 1] = D

    sections = []
    any_ud = False
    for kind, first, last in _runs(labels):
        f_r = None
        if kind == UD:
            any_ud = True
            f_r = _section_resultant(
                edges, c, forces, well, first, last, cfg
            )
        sections.append(Section(kind, first, last, f_r))
    if not any_ud:
        raise NoUndisturbedSection(
            "no undisturbed section wide enough to solve survived refinement"
        )
    return SectionLabeling(
        labels=tuple(labels),
        sections=tuple(sections),
        window_residuals=residuals,
        window_well_posed=well,
        window_forces=forces,
    )


def _runs(labels):
    out = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            out.append((labels[start], start, i - 1))
            start = i
    return out


def _section_resultant(edges, c, forces, well_posed, first, last, cfg):
    interior = [
        w for w in range(first, last - 1) if w + 2 <= last and well_posed[w]
    ]
    if interior:
        return forces[interior].mean(axis=0)
    # Width-2 section: solve the two pieces' equations directly.
    f_star, _, _ = _stacked_solve(
        edges[first : last + 1], c[first : last + 1], cfg.svd_rank_tol,
        cfg.effective_solve_tol,
    )
    return f_star


def _neighbour_resultants(labeling: SectionLabeling, index: int):
    """(before, after) undisturbed resultants around a disturbed section."""
    sections = labeling.sections
    before = sections[index - 1].f_r if index > 0 else None
    after = sections[index + 1].f_r if index + 1 < len(sections) else None
    return before, after


def _raw_section_force(labeling, rod, index):
    """Applied-force resultant for a disturbed section, weight excluded.

    Interior sections difference the neighbouring resultants; boundary
    sections carry the dangling resultant, with the whole-rod weight folded
    in on the clamp-start side where the downstream sum spans everything.
    """
    section = labeling.sections[index]
    if section.kind != D:
        raise ValueError("section is not disturbed")
    before, after = _neighbour_resultants(labeling, index)
    n = rod.piece_count
    if before is None and after is None:
        raise UnboundedSection("disturbed section with no undisturbed neighbour")
    if before is None:
        return -after - n * rod.wpp, True
    if after is None:
        return before.copy(), True
    return before - after, False


def estimate_section_forces(
    labeling: SectionLabeling, rod: RodState, cfg: Optional[EstimatorConfig] = None
) -> list[DisturbanceEstimate]:
    """Force estimate for every disturbed section (resolution left unset)."""
    cfg = cfg or EstimatorConfig()
    out = []
    for index, section in enumerate(labeling.sections):
        if section.kind != D:
            continue
        force, boundary = _raw_section_force(labeling, rod, index)
        if cfg.section_weight_in_force:
            force = force + section.width * rod.wpp
        out.append(
            DisturbanceEstimate(
                section_index=index,
                first_piece=section.first_piece,
                last_piece=section.last_piece,
                boundary=boundary,
                force=force,
            )
        )
    return out


def _closest_on_segment(p0, d, a, b):
    """Closest approach between line p0 + t d and segment [a, b].

    Returns (distance, t, point_on_segment).
    """
    u = b - a
    w = a - p0
    dd = float(np.dot(d, d))
    uu = float(np.dot(u, u))
    du = float(np.dot(d, u))
    denom = dd * uu - du * du
    if denom > 1e-18 * dd * uu:
        t = (np.dot(w, d) * uu - np.dot(w, u) * du) / denom
        s = (np.dot(w, d) * du - np.dot(w, u) * dd) / denom
        s = min(max(s, 0.0), 1.0)
    else:
        s = 0.0
        t = np.dot(w, d) / dd if dd > 0 else 0.0
    # Re-optimize t for the clamped s.
    point = a + s * u
    t = float(np.dot(point - p0, d) / dd) if dd > 0 else 0.0
    dist = float(np.linalg.norm(p0 + t * d - point))
    return dist, t, point


def resolve_disturbance(
    labeling: SectionLabeling,
    rod: RodState,
    torques: StiffnessTorques,
    index: int,
    mode: str,
    cfg: Optional[EstimatorConfig] = None,
    known_position=None,
) -> DisturbanceEstimate:
    """Resolve a disturbed section's torque or application point.

    The section-level balance, with ``x_s``/``x_e`` the section's boundary
    nodes, chord ``e_D = x_e - x_s``, downstream resultant ``F_D`` and the
    summed (gravity-augmented) stiffness torques ``c_D``, reads

        e_D x F_D + (p - x_s) x f + c_D + tau = 0.

    ``known-position`` solves it for ``tau``; ``zero-torque`` sets tau = 0
    and solves the cross-product equation for the application point, picking
    the family member closest to the section polyline and projecting onto
    it; ``midpoint`` just pins the point at the section's mass center.
    """
    cfg = cfg or EstimatorConfig()
    if not torques.gravity_included:
        raise ValueError("resolve_disturbance needs gravity-augmented torques")
    section = labeling.sections[index]
    if section.kind != D:
        raise ValueError("section is not disturbed")
    # The balance identity holds for the applied resultant with weight
    # excluded (weights live inside the augmented torques), regardless of the
    # reporting convention chosen for the force field.
    f_res, boundary = _raw_section_force(labeling, rod, index)
    reported = f_res + section.width * rod.wpp if cfg.section_weight_in_force else f_res

    first, last = section.first_piece, section.last_piece
    x_s = rod.nodes[first]
    x_e = rod.nodes[last + 1]
    _, after = _neighbour_resultants(labeling, index)
    f_d = after if after is not None else np.zeros(3)
    c_d = np.asarray(torques.c)[first : last + 1].sum(axis=0)
    base = np.cross(x_e - x_s, f_d) + c_d

    common = dict(
        section_index=index,
        first_piece=first,
        last_piece=last,
        boundary=boundary,
        force=reported,
    )

    if mode == "known-position":
        if known_position is None:
            raise ValueError("known-position mode needs the application point")
        p = np.asarray(known_position, dtype=np.float64)
        tau = -(base + np.cross(p - x_s, f_res))
        return DisturbanceEstimate(
            **common, mode=mode, position=p, torque=tau
        )

    if mode == "midpoint":
        mids = rod.piece_midpoints()[first : last + 1]
        return DisturbanceEstimate(
            **common, mode=mode, position=mids.mean(axis=0)
        )

    if mode == "zero-torque":
        m = -base
        fnorm = float(np.linalg.norm(f_res))
        if fnorm <= FORCE_EPS:
            raise ZeroForceSection(
                f"section {index} force below {FORCE_EPS} N; application "
                "point undefined (pure-torque disturbance?)"
            )
        f_hat = f_res / fnorm
        along = float(np.dot(m, f_hat))
        mnorm = float(np.linalg.norm(m))
        m_perp = m - along * f_hat
        # a x f only ever produces torques perpendicular to f; when m is
        # essentially parallel to f there is nothing to solve for.  A mere
        # tilt (noise) is fine: the parallel part is projected away and
        # reported as orth_residual.
        if mnorm > FORCE_EPS and float(
            np.linalg.norm(m_perp)
        ) <= cfg.parallel_tol * mnorm:
            raise InconsistentSection(
                f"section {index}: torque residual parallel to the force; "
                "a x f = m has no usable solution"
            )
        a0 = np.cross(f_res, m_perp) / fnorm**2
        p0 = x_s + a0
        best = None
        poly = rod.nodes[first : last + 2]
        for k in range(poly.shape[0] - 1):
            dist, t, point = _closest_on_segment(p0, f_hat, poly[k], poly[k + 1])
            if best is None or dist < best[0] - 1e-15:
                best = (dist, t, point)
        assert best is not None
        return DisturbanceEstimate(
            **common,
            mode=mode,
            position=best[2],
            residual=best[0],
            orth_residual=abs(along),
        )

    raise ValueError(f"unknown resolution mode {mode!r}")


@dataclass(frozen=True)
class MetricEntry:
    rel_l2: float
    angle_rad: float
    angle_deg: float
    angle_defined: bool
    pos_diff: float


def compute_metrics(f_act, f_est, p_act=None, p_est=None) -> MetricEntry:
    """Relative L2 error, angle difference, and application-point distance.

    The angle is emitted in both radians and degrees; it is flagged
    undefined when either vector is numerically zero.  Position difference
    is NaN when either point is missing.
    """
    f_act = np.asarray(f_act, dtype=np.float64)
    f_est = np.asarray(f_est, dtype=np.float64)
    rel_l2 = float(np.linalg.norm(f_est - f_act) / (np.linalg.norm(f_act) + FORCE_EPS))
    na, ne = np.linalg.norm(f_act), np.linalg.norm(f_est)
    if na < FORCE_EPS or ne < FORCE_EPS:
        angle_rad, defined = float("nan"), False
    else:
        cosine = float(np.clip(np.dot(f_act, f_est) / (na * ne), -1.0, 1.0))
        angle_rad, defined = float(np.arccos(cosine)), True
    if p_act is None or p_est is None:
        pos = float("nan")
    else:
        pos = float(
            np.linalg.norm(
                np.asarray(p_est, dtype=np.float64)
                - np.asarray(p_act, dtype=np.float64)
            )
        )
    return MetricEntry(
        rel_l2=rel_l2,
        angle_rad=angle_rad,
        angle_deg=float(np.degrees(angle_rad)),
        angle_defined=defined,
        pos_diff=pos,
    )


def format_report_row(experiment_id: str, metrics: MetricEntry) -> str:
    """One table row: id, relative L2, angle, position difference in mm."""
    return (
        f"{experiment_id}: {metrics.rel_l2:.4f}, {metrics.angle_deg:.4f}, "
        f"{metrics.pos_diff * 1e3:.4f} mm"
    )


def run_estimation(
    rod: RodState,
    cfg: Optional[EstimatorConfig] = None,
    mode: str = "midpoint",
    known_positions=None,
):
    """Full shape-to-forces pass: torques, labeling, per-section estimates.

    ``known_positions`` (for ``known-position`` mode) is a list of 3D
    points; each is matched to the disturbed section whose piece range
    contains the closest polyline point.  Returns
    ``(labeling, estimates, torques)``.
    """
    cfg = cfg or EstimatorConfig()
    torques = augment_gravity(internal_stiffness_torques(rod), rod)
    labeling = classify_sections(rod, torques, cfg)
    estimates = []
    for index, section in enumerate(labeling.sections):
        if section.kind != D:
            continue
        kwargs = {}
        section_mode = mode
        if mode == "known-position":
            p = _match_position(rod, section, known_positions)
            if p is None:
                section_mode = "midpoint"
            else:
                kwargs["known_position"] = p
        try:
            est = resolve_disturbance(
                labeling, rod, torques, index, section_mode, cfg, **kwargs
            )
        except (ZeroForceSection, InconsistentSection):
            est = resolve_disturbance(
                labeling, rod, torques, index, "midpoint", cfg
            )
        estimates.append(est)
    return labeling, estimates, torques


def _match_position(rod, section, known_positions):
    if not known_positions:
        return None
    lo = section.first_piece
    hi = section.last_piece + 2
    poly = rod.nodes[lo:hi]
    best = None
    for p in known_positions:
        p = np.asarray(p, dtype=np.float64)
        dist = min(
            np.linalg.norm(np.cross(poly[k + 1] - poly[k], p - poly[k]))
            / (np.linalg.norm(poly[k + 1] - poly[k]) + 1e-18)
            for k in range(poly.shape[0] - 1)
        )
        if best is None or dist < best[0]:
            best = (dist, p)
    # Only accept a point that actually lies near this section.
    if best is not None and best[0] < 2.0 * float(np.max(rod.rest_lengths)):
        return best[1]
    return None


def global_balance(
    estimates: list[DisturbanceEstimate],
    labeling: SectionLabeling,
    rod: RodState,
    cfg: Optional[EstimatorConfig] = None,
):
    """Sum of estimates plus the gravity they do not account for.

    Zero (to solver precision) on clean input: all external forces on a rod
    in equilibrium cancel.  When section weights are folded into the
    estimates, only the undisturbed pieces' weight remains unattributed.
    """
    cfg = cfg or EstimatorConfig()
    total = np.zeros(3)
    for est in estimates:
        total = total + est.force
    if cfg.section_weight_in_force:
        gravity = labeling.ud_piece_count * rod.wpp
    else:
        gravity = rod.piece_count * rod.wpp
    return total + gravity
