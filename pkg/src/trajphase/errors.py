"""Exception hierarchy shared across the package."""


class TrajphaseError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParameterError(TrajphaseError, ValueError):
    exit_code = 2


class NormalizationError(TrajphaseError, ValueError):
    exit_code = 2


class IntegrationBlowupError(TrajphaseError, FloatingPointError):
    """Raised when a state update produced non-finite amplitudes."""

    exit_code = 3

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite amplitudes after step {step}")


class TruncationStarvationError(TrajphaseError, FloatingPointError):
    exit_code = 3


class CapabilityError(TrajphaseError):
    """The requested backend cannot handle the problem size."""

    exit_code = 4


class TrajectoryFormatError(TrajphaseError):
    exit_code = 5


class BadMagicError(TrajectoryFormatError):
    pass


class VersionMismatchError(TrajectoryFormatError):
    pass


class TruncatedPayloadError(TrajectoryFormatError):
    pass


class DatasetError(TrajphaseError, ValueError):
    exit_code = 5


class TrainingError(TrajphaseError, FloatingPointError):
    exit_code = 6

    def __init__(self, batch_index, message=None):
        self.batch_index = batch_index
        super().__init__(message or f"non-finite loss in batch {batch_index}")


class DegenerateInputError(TrajphaseError, ValueError):
    exit_code = 6


class LabelTieError(TrajphaseError):
    exit_code = 6


class FitError(TrajphaseError):
    exit_code = 7


class FitConvergenceError(FitError):
    """Refinement failed; ``best_candidate`` holds the best coarse-grid fit."""

    def __init__(self, message, best_candidate=None):
        super().__init__(message)
        self.best_candidate = best_candidate


class MissingArtifactError(TrajphaseError):
    exit_code = 8


class ProvenanceError(TrajphaseError):
    exit_code = 9


class ReportError(TrajphaseError):
    exit_code = 10
