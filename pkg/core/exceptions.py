"""
Domain errors raised by the abstraction toolchain.

Every error is a ``ValueError`` so callers that only care about "bad input"
can catch the builtin; commands map them to exit codes.
"""


class NetabsError(ValueError):
    """Base class for all domain errors."""


# Linear algebra

class DimensionMismatch(NetabsError):
    pass


class NonSquare(NetabsError):
    pass


class AsymmetryExceedsTol(NetabsError):
    pass


class RankDeficientWarning(UserWarning):
    """Least squares matrix without full column rank; min-norm solution returned."""


# Systems

class TooSmall(NetabsError):
    pass


# Certificates

class NonSymmetricXbar(NetabsError):
    pass


class MtilNotPD(NetabsError):
    pass


class NotVerified(NetabsError):
    pass


class SingularGram(NetabsError):
    pass


# Composition

class ModeUnavailable(NetabsError):
    pass


class NotEquitable(NetabsError):
    pass


class LmiFailed(NetabsError):
    pass


class CouplingUnsolvable(NetabsError):
    pass


# Bounds

class InvalidKappa(NetabsError):
    pass


class NonPositiveAlphaEps(NetabsError):
    pass


class NonzeroPsi(NetabsError):
    pass


class OutOfRange(NetabsError):
    pass


# Specification language

class ScltlSyntaxError(NetabsError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class NegationNotOnAtom(ScltlSyntaxError):
    pass


class StateBlowup(NetabsError):
    pass


class LetterClash(NetabsError):
    pass


class UnknownLetter(NetabsError):
    pass


# Monte Carlo

class EmptyBatch(NetabsError):
    pass


class PolicySaturationViolated(NetabsError):
    pass


class EmptyWaypointList(NetabsError):
    pass


# Configuration / commands

class ConfigInvalid(NetabsError):
    pass


class CheckFailed(NetabsError):
    pass
