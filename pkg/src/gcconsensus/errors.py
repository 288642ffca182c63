"""Exception hierarchy shared by all modules."""


class ConsensusError(Exception):
    """Base class for every error raised by this package."""


# numerics
class NonSymmetric(ConsensusError, ValueError):
    pass


class NoConvergence(ConsensusError, ArithmeticError):
    pass


class Singular(ConsensusError, ArithmeticError):
    pass


class PositiveDefiniteFailure(ConsensusError, ArithmeticError):
    """Raised by ``cholesky`` when the input is not positive definite.

    Callers use this as a yes/no answer; see ``is_positive_definite``.
    """


class NotHurwitz(ConsensusError, ArithmeticError):
    pass


class DimensionMismatch(ConsensusError, ValueError):
    pass


# graph
class Disconnected(ConsensusError, ValueError):
    pass


class DisconnectedMember(Disconnected):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"topology #{index + 1} is not connected")


# configs report a disconnected member under this name
DisconnectedTopology = DisconnectedMember


class EmptySet(ConsensusError, ValueError):
    pass


class SizeMismatch(ConsensusError, ValueError):
    pass


# synthesis / mincost
class BadCostMatrix(ConsensusError, ValueError):
    pass


class NotStabilizable(ConsensusError, ValueError):
    def __init__(self, witness, message=None):
        self.witness = witness
        super().__init__(message or f"(A, B) not stabilizable; uncontrollable mode at {witness}")


class NoStabilizingSolution(ConsensusError, ArithmeticError):
    """The modified Riccati equation has no stabilizing solution reachable by the solver."""

    def __init__(self, message, residual=float("nan"), stage=0.0):
        self.residual = residual
        self.stage = stage
        super().__init__(f"{message} (homotopy stage {stage:.4g}, last residual {residual:.3e})")


class NotPositiveDefinite(ConsensusError, ArithmeticError):
    """A stabilizing Riccati solution was found but it is not positive definite."""

    def __init__(self, P, message="stabilizing Riccati solution is not positive definite"):
        self.P = P
        super().__init__(message)


class NonlinearModel(ConsensusError, ValueError):
    pass


class Infeasible(ConsensusError, ArithmeticError):
    def __init__(self, message, phase1_value=float("nan")):
        self.phase1_value = phase1_value
        super().__init__(f"{message} (phase-I optimum {phase1_value:.3e})")


# sim
class DwellViolation(ConsensusError, ValueError):
    pass


class NonFiniteState(ConsensusError, ArithmeticError):
    def __init__(self, message, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


# config
class ParseError(ConsensusError, ValueError):
    pass


class ValidationError(ConsensusError, ValueError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
