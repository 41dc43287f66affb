"""Exception hierarchy shared by all forcedwave modules."""


class ForcedWaveError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameters(ForcedWaveError, ValueError):
    pass


class NoRealRoots(ForcedWaveError):
    """The characteristic quadratic has no real root at this speed."""


class UnknownScenario(ForcedWaveError, ValueError):
    pass


class HypothesisViolation(ForcedWaveError):
    """A sufficient condition required by a construction does not hold.

    ``condition`` names the first failing condition of the report.
    """

    def __init__(self, condition: str, message: str = ""):
        self.condition = condition
        super().__init__(message or f"hypothesis violated: {condition}")


class SpeedRegimeMismatch(ForcedWaveError):
    pass


class BreakpointDerivative(ForcedWaveError):
    """Derivative requested exactly at a kink without a side selector."""


class GridTouchesBreakpoint(ForcedWaveError):
    pass


class GammaOutOfRange(ForcedWaveError, ValueError):
    pass


class IterationStall(ForcedWaveError):
    pass


class EnvelopeUnverified(ForcedWaveError):
    pass


class NewtonDiverged(ForcedWaveError):
    pass


class MaxIterations(ForcedWaveError):
    pass


class BoxViolation(ForcedWaveError):
    pass


class NonfiniteValue(ForcedWaveError):
    pass


class GridMismatch(ForcedWaveError, ValueError):
    pass


class PrerequisiteViolation(ForcedWaveError):
    pass
