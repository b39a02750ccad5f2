"""Exception hierarchy shared across the package."""


class RodForceError(Exception):
    """Base class for all package-specific errors."""


class DegenerateEdge(RodForceError):
    """Two consecutive nodes coincide (edge shorter than the epsilon floor)."""


class AntiParallelEdges(RodForceError):
    """Adjacent edges fold back onto each other; discrete curvature is undefined."""


class DoubleAugmentation(RodForceError):
    """Gravity torques were already folded into this torque set."""


class NotConverged(RodForceError):
    """Equilibrium solve stopped at the iteration cap above tolerance."""

    def __init__(self, residual: float, iterations: int):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(
            f"no equilibrium after {iterations} iterations "
            f"(residual {residual:.3e} N)"
        )


class AssumptionViolation(RodForceError):
    """Input breaks a precondition of the estimation pipeline."""


class NoUndisturbedSection(AssumptionViolation):
    """No consistency window passed; the whole rod looks disturbed."""


class RodTooShort(AssumptionViolation):
    """Fewer than four pieces; no window plus disturbed piece fits."""


class UnboundedSection(RodForceError):
    """Interior disturbed section without undisturbed neighbours (labeling bug)."""


class ZeroForceSection(RodForceError):
    """Section force is numerically zero; an application point is undefined."""


class InconsistentSection(RodForceError):
    """Section torque is mostly parallel to its force; a x f = m has no solution."""


class InsufficientPoints(RodForceError):
    """Too few observation points to smooth or build a rod."""


class ParseError(RodForceError):
    """A shape/scenario/config file could not be parsed."""
