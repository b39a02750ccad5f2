"""Quasi-static equilibrium oracle.

Given clamp constraints and applied point forces, relax a rod to a static
equilibrium by minimizing total potential energy (bending + stretching
penalty + gravity + applied-force work) over the free node positions.
Clamped nodes are held exactly by projection; a Levenberg-damped Newton
iteration with backtracking keeps the energy non-increasing and drives the
free-node residual force to the requested tolerance.

The solver is deliberately tight: the estimator's consistency conditions are
algebraic identities of the discrete equilibrium, so the window residuals it
measures are bounded by the force residual left here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .core import RodState
from .errors import NotConverged


@dataclass(frozen=True)
class SolverParams:
    max_iters: int = 50000
    force_tolerance: float = 1e-6   # N, infinity norm over free nodes
    damping: float = 1e-3           # initial Levenberg damping
    step_size: float = 1.0          # initial backtracking step
    stretch_stiffness: Optional[float] = None  # N; default 1e3 EI / l^2

    def __post_init__(self):
        if self.max_iters <= 0 or self.force_tolerance <= 0:
            raise ValueError("max_iters and force_tolerance must be positive")
        if self.damping <= 0 or self.step_size <= 0:
            raise ValueError("damping and step_size must be positive")


@dataclass(frozen=True, eq=False)
class Clamp:
    node: int
    position: np.ndarray
    tangent: Optional[np.ndarray] = None  # unit direction of the incident edge

    def __post_init__(self):
        object.__setattr__(
            self, "position", np.array(self.position, dtype=np.float64)
        )
        if self.tangent is not None:
            t = np.array(self.tangent, dtype=np.float64)
            norm = np.linalg.norm(t)
            if norm == 0:
                raise ValueError("clamp tangent must be nonzero")
            object.__setattr__(self, "tangent", t / norm)


@dataclass(frozen=True, eq=False)
class AppliedForce:
    piece: int
    ratio: float
    force: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"application ratio {self.ratio} outside [0, 1]")
        object.__setattr__(self, "force", np.array(self.force, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class SimScenario:
    """Clamps plus applied forces driving the equilibrium solve.

    ``rod`` doubles as the initial guess; ``wpp`` overrides the rod's own
    weight vector when given.
    """

    rod: RodState
    clamps: tuple
    applied_forces: tuple = ()
    wpp: Optional[np.ndarray] = None
    solver: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self):
        object.__setattr__(self, "clamps", tuple(self.clamps))
        object.__setattr__(self, "applied_forces", tuple(self.applied_forces))
        n = self.rod.piece_count
        if len({c.node for c in self.clamps}) < 2:
            raise ValueError("need at least two clamped nodes")
        for c in self.clamps:
            if not 0 <= c.node <= n:
                raise ValueError(f"clamp node {c.node} out of range")
        for f in self.applied_forces:
            if not 0 <= f.piece < n:
                raise ValueError(f"applied piece {f.piece} out of range")
        if self.wpp is not None:
            w = np.array(self.wpp, dtype=np.float64)
            w.setflags(write=False)
            object.__setattr__(self, "wpp", w)

    @property
    def effective_wpp(self) -> np.ndarray:
        return self.rod.wpp if self.wpp is None else self.wpp

    def effective_rod(self) -> RodState:
        """Rod with the scenario's gravity folded into its weight field."""
        if self.wpp is None:
            return self.rod
        return replace(self.rod, wpp=self.wpp, wpp_axis_check=False)


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    rod: RodState
    residual_force_inf_norm: float
    converged: bool
    iterations: int
    energy: float
    energy_history: tuple = ()


def external_nodal_forces(scenario: SimScenario) -> np.ndarray:
    """Gravity plus applied forces lumped onto nodes.

    Each piece's weight splits half-and-half to its end nodes; an applied
    force at ratio r on piece i goes to nodes (i, i+1) with weights
    (1-r, r), keeping the lever arm of the point of application.
    """
    n = scenario.rod.piece_count
    wpp = scenario.effective_wpp
    ext = np.zeros((n + 1, 3))
    ext[:-1] += 0.5 * wpp
    ext[1:] += 0.5 * wpp
    for f in scenario.applied_forces:
        ext[f.piece] += (1.0 - f.ratio) * f.force
        ext[f.piece + 1] += f.ratio * f.force
    return ext


def _default_stretch(rod: RodState, params: SolverParams) -> np.ndarray:
    if params.stretch_stiffness is not None:
        return np.full(rod.piece_count, float(params.stretch_stiffness))
    return 1e3 * rod.bend_stiffness / rod.rest_lengths**2


class _Potential:
    """Total potential energy and gradient over node positions."""

    def __init__(self, scenario: SimScenario):
        self.rod = scenario.rod
        self.rest = scenario.rod.rest_lengths
        self.ei = scenario.rod.bend_stiffness
        self.ks = _default_stretch(scenario.rod, scenario.solver)
        self.ext = external_nodal_forces(scenario)

    def energy(self, x: np.ndarray) -> float:
        eb, _, _ = kernels.bend_state(x, self.rest, self.ei)
        if not np.isfinite(eb):
            return np.inf
        es, _ = kernels.stretch_state(x, self.rest, self.ks)
        return eb + es - float(np.sum(self.ext * x))

    def energy_grad(self, x: np.ndarray):
        eb, gb, _ = kernels.bend_state(x, self.rest, self.ei)
        if not np.isfinite(eb):
            return np.inf, np.zeros_like(x)
        es, gs = kernels.stretch_state(x, self.rest, self.ks)
        return eb + es - float(np.sum(self.ext * x)), gb + gs - self.ext

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.energy_grad(x)[1]


def _fixed_node_positions(scenario: SimScenario) -> dict:
    """Clamp constraints as node -> position, including tangent pins."""
    n = scenario.rod.piece_count
    rest = scenario.rod.rest_lengths
    fixed = {}
    for c in scenario.clamps:
        fixed[c.node] = np.asarray(c.position, dtype=np.float64)
        if c.tangent is not None:
            if c.node < n:
                fixed[c.node + 1] = fixed[c.node] + rest[c.node] * c.tangent
            else:
                fixed[c.node - 1] = fixed[c.node] - rest[c.node - 1] * c.tangent
    return fixed


def _fd_hessian(pot: _Potential, x: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Hessian on the free DOFs by central differences of the analytic gradient."""
    xf = x.reshape(-1)
    idx = np.flatnonzero(free)
    m = idx.size
    h = 1e-7 * max(1.0, float(np.abs(xf).max()))
    cols = np.empty((m, m))
    for col, j in enumerate(idx):
        xp = xf.copy()
        xp[j] += h
        gp = pot.grad(xp.reshape(x.shape)).reshape(-1)[idx]
        xm = xf.copy()
        xm[j] -= h
        gm = pot.grad(xm.reshape(x.shape)).reshape(-1)[idx]
        cols[:, col] = (gp - gm) / (2.0 * h)
    return 0.5 * (cols + cols.T)


def relax_to_equilibrium(
    scenario: SimScenario, initial_nodes: Optional[np.ndarray] = None
) -> EquilibriumResult:
    """Minimize total potential until the free-node force residual passes.

    Raises :class:`NotConverged` with the residual when the iteration cap is
    reached; accepted iterates never increase the energy.
    """
    params = scenario.solver
    pot = _Potential(scenario)
    x = np.array(
        scenario.rod.nodes if initial_nodes is None else initial_nodes,
        dtype=np.float64,
    )
    fixed = _fixed_node_positions(scenario)
    for node, position in fixed.items():
        x[node] = position
    free = np.ones(x.shape, dtype=bool)
    for node in fixed:
        free[node] = False
    free_flat = free.reshape(-1)
    idx = np.flatnonzero(free_flat)

    lam = params.damping
    max_step = 0.2 * scenario.rod.total_rest_length
    energy, grad = pot.energy_grad(x)
    history = [energy]
    iterations = 0
    residual = float(np.abs(grad.reshape(-1)[idx]).max()) if idx.size else 0.0
    best_residual = residual
    stagnant = 0

    while iterations < params.max_iters:
        if residual <= params.force_tolerance:
            return _finish(scenario, x, residual, True, iterations, energy, history)
        # Floating-point floor detection: when the energy stops moving at all
        # while the residual no longer improves, the roundoff floor of the
        # stiff stretch term has been reached and the tolerance is
        # unattainable; bail out instead of burning the iteration budget.
        if residual < 0.9 * best_residual:
            best_residual = residual
            stagnant = 0
        elif len(history) > 2 and history[-1] == history[-2]:
            stagnant += 1
            if stagnant > 40:
                raise NotConverged(best_residual, iterations)
        iterations += 1
        hess = _fd_hessian(pot, x, free_flat)
        g = grad.reshape(-1)[idx]
        scale = max(float(np.abs(np.diag(hess)).max()), 1e-12)
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(
                    hess + lam * scale * np.eye(idx.size), -g
                )
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            norm = float(np.abs(step).max())
            if norm > max_step:
                step *= max_step / norm
            alpha = params.step_size
            trial_energy = np.inf
            for _ in range(30):
                xt = x.reshape(-1).copy()
                xt[idx] += alpha * step
                xt = xt.reshape(x.shape)
                trial_energy = pot.energy(xt)
                if trial_energy <= energy + 1e-12 * max(abs(energy), 1.0):
                    break
                alpha *= 0.5
            else:
                lam *= 10.0
                if lam > 1e14:
                    break
                continue
            x = xt
            energy, grad = pot.energy_grad(x)
            history.append(energy)
            lam = max(lam * 0.3, 1e-14)
            accepted = True
            break
        residual = float(np.abs(grad.reshape(-1)[idx]).max()) if idx.size else 0.0
        if not accepted and residual > params.force_tolerance:
            raise NotConverged(residual, iterations)

    if residual <= params.force_tolerance:
        return _finish(scenario, x, residual, True, iterations, energy, history)
    raise NotConverged(residual, iterations)


def _finish(scenario, x, residual, converged, iterations, energy, history):
    rod = replace(
        scenario.effective_rod(),
        nodes=x,
        wpp_axis_check=False,
    )
    return EquilibriumResult(
        rod=rod,
        residual_force_inf_norm=residual,
        converged=converged,
        iterations=iterations,
        energy=energy,
        energy_history=tuple(history),
    )


def clamp_reactions(
    result: EquilibriumResult, scenario: SimScenario
) -> list[np.ndarray]:
    """Constraint force at each clamped node of a converged result.

    The reaction is what the clamp must add for the node to balance, i.e. the
    negative of the net (elastic + external) force left there: +dU/dx at the
    clamped node.  Tangent-pinned neighbour nodes fold their share into the
    owning clamp so the returned list matches ``scenario.clamps``.
    """
    pot = _Potential(scenario)
    grad = pot.grad(np.array(result.rod.nodes))
    fixed = _fixed_node_positions(scenario)
    owner = {}
    for c in scenario.clamps:
        owner[c.node] = c.node
        if c.tangent is not None:
            n = scenario.rod.piece_count
            neighbour = c.node + 1 if c.node < n else c.node - 1
            owner.setdefault(neighbour, c.node)
    totals = {c.node: np.zeros(3) for c in scenario.clamps}
    for node in fixed:
        totals[owner[node]] += grad[node]
    return [totals[c.node] for c in scenario.clamps]


def with_force(
    scenario: SimScenario, piece: int, ratio: float, delta_force
) -> SimScenario:
    """Scenario with ``delta_force`` merged into the applied force list."""
    delta = np.asarray(delta_force, dtype=np.float64)
    entries = list(scenario.applied_forces)
    for i, f in enumerate(entries):
        if f.piece == piece and abs(f.ratio - ratio) < 1e-12:
            entries[i] = AppliedForce(piece, f.ratio, f.force + delta)
            break
    else:
        entries.append(AppliedForce(piece, ratio, delta))
    entries = [f for f in entries if np.linalg.norm(f.force) > 0.0]
    return replace(scenario, applied_forces=tuple(entries))


class SimSession:
    """Single-owner mutable wrapper: one scenario, its latest equilibrium.

    Mutators must be called from one owner at a time; the
    :class:`EquilibriumResult` snapshots it hands out are immutable and safe
    to share with concurrent readers.
    """

    def __init__(self, scenario: SimScenario):
        self.scenario = scenario
        self.latest: Optional[EquilibriumResult] = None

    def relax(self) -> EquilibriumResult:
        warm = None if self.latest is None else self.latest.rod.nodes
        self.latest = relax_to_equilibrium(self.scenario, initial_nodes=warm)
        return self.latest

    def perturb_and_resettle(
        self, piece: int, ratio: float, delta_force
    ) -> EquilibriumResult:
        """Add a force increment and re-relax warm-started from the last shape."""
        if self.latest is None or not self.latest.converged:
            raise ValueError("perturb requires a converged equilibrium")
        self.scenario = with_force(self.scenario, piece, ratio, delta_force)
        self.latest = relax_to_equilibrium(
            self.scenario, initial_nodes=self.latest.rod.nodes
        )
        return self.latest

    def clear_forces(self) -> EquilibriumResult:
        self.scenario = replace(self.scenario, applied_forces=())
        warm = None if self.latest is None else self.latest.rod.nodes
        self.latest = relax_to_equilibrium(self.scenario, initial_nodes=warm)
        return self.latest


def arc_initial_nodes(
    start, end, total_length: float, pieces: int, sag_direction=(0.0, 0.0, -1.0)
) -> np.ndarray:
    """Circular-arc node chain joining two points with a given arc length.

    The arc bulges toward ``sag_direction``; used as the initial guess for
    hanging-wire scenarios where the rest length exceeds the span.
    """
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    chord = end - start
    d = float(np.linalg.norm(chord))
    if d == 0.0:
        raise ValueError("clamp points coincide")
    if d >= total_length * (1.0 - 1e-12):
        t = np.linspace(0.0, 1.0, pieces + 1)[:, None]
        return start + t * chord
    u = chord / d
    sag = np.asarray(sag_direction, dtype=np.float64)
    s = sag - np.dot(sag, u) * u
    if np.linalg.norm(s) < 1e-12:
        s = np.array([0.0, 0.0, -1.0]) - u * u[2] * -1.0
        s = s - np.dot(s, u) * u
        if np.linalg.norm(s) < 1e-12:
            s = np.cross(u, [0.0, 1.0, 0.0])
    s /= np.linalg.norm(s)
    # Solve sin(a)/a = d/L on (0, pi) for the half-angle of the arc.
    ratio = d / total_length
    lo, hi = 1e-12, np.pi - 1e-9
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sin(mid) / mid > ratio:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    radius = total_length / (2.0 * alpha)
    center = 0.5 * (start + end) - radius * np.cos(alpha) * s
    angles = np.linspace(-alpha, alpha, pieces + 1)
    return (
        center[None, :]
        + radius * np.cos(angles)[:, None] * s[None, :]
        + radius * np.sin(angles)[:, None] * u[None, :]
    )


def hanging_wire_scenario(
    span: float = 0.30,
    length: float = 0.50,
    pieces: int = 30,
    bend_stiffness: float = 0.05,
    twist_stiffness: float = 0.04,
    total_weight: float = 0.12,
    applied_forces: Sequence[AppliedForce] = (),
    solver: Optional[SolverParams] = None,
) -> SimScenario:
    """Two end clamps a fixed span apart with slack wire hanging between.

    This is the workhorse validation setup: a ``length`` wire whose end
    nodes are clamped ``span`` apart horizontally, sagging under gravity.
    """
    wpp = np.array([0.0, 0.0, -total_weight / pieces])
    start = np.zeros(3)
    end = np.array([span, 0.0, 0.0])
    nodes = arc_initial_nodes(start, end, length, pieces)
    rest = np.full(pieces, length / pieces)
    rod = RodState(
        nodes,
        bend_stiffness,
        twist_stiffness,
        wpp,
        rest_lengths=rest,
    )
    return SimScenario(
        rod=rod,
        clamps=(Clamp(0, start), Clamp(pieces, end)),
        applied_forces=tuple(applied_forces),
        solver=solver or SolverParams(),
    )
