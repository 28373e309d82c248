"""Exception types raised across the package."""


class MVFundError(Exception):
    """Base class for all package errors."""


# geometry
class SingularViewMatrix(MVFundError):
    pass


class RankDeficiencyError(MVFundError):
    pass


class DegenerateCloud(MVFundError):
    pass


class DegenerateConfiguration(MVFundError):
    pass


class InsufficientViews(MVFundError):
    pass


class DegenerateRays(MVFundError):
    pass


# n-view matrices
class IncompleteMatrix(MVFundError):
    pass


class SignatureError(MVFundError):
    pass


class RoleAmbiguity(MVFundError):
    pass


class SkewnessViolation(MVFundError):
    pass


# solver
class UncoveredEdge(MVFundError):
    pass


class NonFinite(MVFundError):
    pass


# viewing graph
class DisconnectedGraph(MVFundError):
    pass


class UncoverableView(MVFundError):
    pass


class CoverInfeasible(MVFundError):
    pass


# reconstruction
class AlignmentDegenerate(MVFundError):
    pass


class UnreachedTriplet(MVFundError):
    pass


# synthesis
class InvalidLayout(MVFundError):
    pass


class InsufficientMatches(MVFundError):
    pass


# file formats
class ProblemFormatError(MVFundError):
    """Malformed problem/reconstruction file; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
