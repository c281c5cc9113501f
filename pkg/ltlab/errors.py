"""Exceptions raised across the lab.

Precondition failures also derive from ``ValueError`` and numerical failures from
``RuntimeError`` so callers that only know the builtins still catch them.
"""


class LabError(Exception):
    """Base class for every error raised by ltlab."""


class InvalidBandSet(LabError, ValueError):
    pass


class InvalidShift(LabError, ValueError):
    """The Möbius shift omega must lie strictly left of the spectrum."""


class TruncationExceeded(LabError, ValueError):
    """A query needs bands that the truncated band set does not retain."""

    def __init__(self, x: float, limit: float):
        self.x = x
        self.limit = limit
        super().__init__(f"Re z = {x!r} is not below the last retained edge b_K = {limit!r}")


class WrongRegion(LabError, ValueError):
    pass


class OnSpectrum(LabError, ValueError):
    pass


class InvalidExponents(LabError, ValueError):
    pass


class DivergentIntegral(LabError, ValueError):
    pass


class QuadratureError(LabError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, value: float, error: float, message: str = ""):
        self.value = value
        self.error = error
        super().__init__(f"quadrature did not converge: value={value!r}, error estimate={error!r}. {message}".strip())


class FewerBandsFound(LabError, ValueError):
    def __init__(self, k_actual: int, k_requested: int):
        self.k_actual = k_actual
        self.k_requested = k_requested
        super().__init__(f"found {k_actual} band(s), {k_requested} requested")


class DenseLimitExceeded(LabError, ValueError):
    pass


class InvalidDiscretization(LabError, ValueError):
    pass


class NonConvergence(LabError, RuntimeError):
    def __init__(self, message: str, iterations: int = 0):
        self.iterations = iterations
        super().__init__(f"{message} (after {iterations} iteration(s))")


class NearSpectrum(LabError, ValueError):
    def __init__(self, side: str, sigma_min: float):
        self.side = side
        self.sigma_min = sigma_min
        super().__init__(f"z is numerically on the spectrum of {side} (smallest singular value {sigma_min:.3e})")


class MiddleFactorSingular(LabError, RuntimeError):
    pass


class PreconditionFailed(LabError, ValueError):
    pass


class StageFailure(LabError, RuntimeError):
    """A pipeline stage failed; the original error is chained as ``__cause__``."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")
