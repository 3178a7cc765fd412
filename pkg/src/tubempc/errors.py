"""Exception hierarchy shared across the toolkit."""


class TubeMpcError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(TubeMpcError):
    """Inconsistent matrix/vector dimensions."""


class EmptySetError(TubeMpcError):
    """An operation required a nonempty set but the set is empty."""


class SolverFailure(TubeMpcError):
    """The LP/QP backend failed numerically (not infeasible/unbounded)."""


class NonConvergence(TubeMpcError):
    """An iterative routine hit its iteration cap before meeting its residual."""


class StabilityError(TubeMpcError):
    """A matrix that must be Schur stable is not."""


class DisturbanceTooLarge(TubeMpcError):
    """Constraint tightening emptied a constraint set; the disturbance bound is
    too large for robust feasibility with the current tube."""


class InvariantViolation(TubeMpcError):
    """A property that is guaranteed by construction failed at run time
    (e.g. the receding-horizon problem became infeasible after step 0)."""


class MpcInfeasible(TubeMpcError):
    """The receding-horizon problem is infeasible from the given start."""


class RpiFailure(TubeMpcError):
    """RPI set computation failed.

    ``reason`` is ``"unbounded"`` when no invariant set exists for the chosen
    facet normals, or ``"exhausted_k"`` when a sweep hit its cap.
    """

    def __init__(self, message: str, reason: str):
        super().__init__(message)
        self.reason = reason


class NonBoxSet(TubeMpcError):
    """A set that must be an axis-aligned box is not one."""


class ExhaustedIterations(TubeMpcError):
    """A set recursion hit its iteration cap without reaching a fixed point."""


class ProblemFormatError(TubeMpcError):
    """A problem file failed schema or cross-dimension validation."""
