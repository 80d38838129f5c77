"""Exception hierarchy shared by all modules."""


class DecompensError(Exception):
    """Base class for all package errors."""


class DecompositionError(DecompensError):
    pass


class SeriesTooShort(DecompositionError, ValueError):
    pass


class InsufficientExtrema(DecompositionError):
    pass


class StageCollapse(DecompositionError):
    """Every noise realization ran out of IMFs at a CEEMDAN stage."""


class MissingColumn(DecompensError, KeyError):
    pass


class NonUniformInterval(DecompensError, ValueError):
    pass


class EmptyFile(DecompensError, ValueError):
    pass


class HorizonTooLong(DecompensError, ValueError):
    pass


class ShapeMismatch(DecompensError, ValueError):
    pass


class DivergedTraining(DecompensError, FloatingPointError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training loss became non-finite at epoch {epoch}")


class SingularDesign(DecompensError):
    pass


class EmptyInput(DecompensError, ValueError):
    pass


class InsufficientRuns(DecompensError, ValueError):
    pass


class ConfigError(DecompensError, ValueError):
    pass


class IoFailure(DecompensError, OSError):
    pass


class RunFailed(DecompensError):
    """A repeat failed; ``partial`` holds the report gathered before it."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
