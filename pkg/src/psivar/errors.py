"""Exception types shared across the package."""


class PsivarError(Exception):
    """Base class for all package errors."""


class SingularityError(PsivarError):
    """Resolvent requested too close to an eigenvalue."""


class IllConditionedContourError(PsivarError):
    """Integration contour passes too close to the spectrum."""


class SeparationError(PsivarError):
    """Contour does not cleanly separate one eigenvalue cluster."""


class NeedsSubdivisionError(PsivarError):
    """No valid clustering exists over the sampled region.

    Carries the offending base points in ``points``.
    """

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = points


class FrameError(PsivarError):
    """Frame field is singular or fails the transition identity."""


class CompositionError(PsivarError):
    """Action chains of the operands do not match."""


class OrderError(PsivarError):
    """Requested expansion order exceeds available derivative data."""


class NotEllipticError(PsivarError):
    """Symbol failed the ellipticity check."""


class PositivityError(PsivarError):
    """Scalar base symbol is not positive on the test lattice."""


class ResolutionError(PsivarError):
    """Sampling resolution is insufficient (aliasing or phase jumps)."""


class ShapeError(PsivarError):
    """Array dimensions are inconsistent."""


class ConditioningError(PsivarError):
    """A linear solve or norm computation is numerically unreliable."""


class ConstructionError(PsivarError):
    """Declared orders or weights are inconsistent with the data."""


class InputError(PsivarError):
    """Input data is missing or malformed."""


class EvaluationError(PsivarError):
    """Symbol evaluation returned a non-finite value.

    Carries the offending point in ``point``.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ContourError(PsivarError):
    """An eigenvalue lies on (or too close to) the integration contour."""


class NoOrderReductionError(PsivarError):
    """Parameter sweep exhausted without reaching invertibility.

    Carries the conditioning curve in ``curve`` as a list of
    ``(lambda, ratio)`` pairs.
    """

    def __init__(self, message, curve=None):
        super().__init__(message)
        self.curve = curve


class NotInvertibleOnSubbundleError(PsivarError):
    """Restricted principal symbol is not invertible between the subbundles."""
