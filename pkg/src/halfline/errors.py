"""Exception and warning types shared across the package."""


class HalflineError(Exception):
    """Base class for all errors raised by this package."""


class GridTooCoarse(HalflineError):
    """Input data does not contain enough samples for a valid grid."""


class TruncationTooSmall(HalflineError):
    """Eigenfunctions still reach the artificial boundary after repeated domain doubling."""


class ClusterDetected(HalflineError):
    """Two computed eigenvalues are closer than the resolution of the solve.

    The half-line problem has simple spectrum, so a cluster signals a
    discretization artifact rather than physics.
    """


class NotAnEigenpair(HalflineError):
    """A supplied (eigenvalue, eigenfunction) pair fails the residual check for the given problem."""


class GroundStateHasZeros(HalflineError):
    """Single commutation and the log-derivative diagnostics require a zero-free ground state."""


class SeedResidualTooLarge(HalflineError):
    """An insertion seed does not solve the differential equation to the required accuracy."""


class SameEigenvalue(HalflineError):
    """The eigenfunction map is undefined at the removed eigenvalue itself."""


class HypothesisViolated(HalflineError):
    """The potential violates a sign hypothesis required by the requested operation."""


class DominanceViolated(HalflineError):
    """The main bound fails to dominate the comparison bound; indicates a solver or formula bug."""


class ConditioningWarning(UserWarning):
    """The running integral has nearly exhausted its budget at the truncation point.

    Quantities built from it remain finite (denominators are floored) but lose
    relative accuracy near the right boundary.
    """
