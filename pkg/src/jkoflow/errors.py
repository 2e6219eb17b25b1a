"""Exception types raised across the package."""


class JkoFlowError(Exception):
    pass


class IncompatibleRhs(JkoFlowError, ValueError):
    """Right-hand side of a pure Neumann problem does not integrate to zero."""


class SingularWeight(JkoFlowError, ValueError):
    pass


class InfeasibleConstraint(JkoFlowError, ValueError):
    """No density satisfies the box and mass constraints simultaneously."""


class DeltaTooLarge(JkoFlowError, ValueError):
    pass


class QuadratureFailure(JkoFlowError, RuntimeError):
    pass


class MassMismatch(JkoFlowError, ValueError):
    pass


class SolverStall(JkoFlowError, RuntimeError):
    pass


class InnerSolverFailure(JkoFlowError, RuntimeError):
    pass


class OutOfRange(JkoFlowError, ValueError):
    pass


class DegenerateState(JkoFlowError, ValueError):
    pass


class CflViolation(JkoFlowError, ValueError):
    pass


class LinearSolveFailure(JkoFlowError, RuntimeError):
    pass


class PositivityLoss(JkoFlowError, RuntimeError):
    """The direct solver produced a value outside [0, M].

    ``time`` is the first time at which the violation was detected and
    ``trajectory`` holds the iterates computed up to (excluding) that step.
    """

    def __init__(self, message, time=None, trajectory=None):
        super().__init__(message)
        self.time = time
        self.trajectory = trajectory


class ConfigError(JkoFlowError, ValueError):
    pass
