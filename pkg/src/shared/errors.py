from typing import Optional


class MLMCError(Exception):
    """Base class for every error raised by the engine"""

    status = "internal_error"


class SamplingFailureError(MLMCError):
    """A sampler returned a non-finite value"""

    status = "sampling_failure"

    def __init__(self, level: int, message: str = "non-finite sample"):
        self.level = level
        super().__init__(f"level {level}: {message}")


class InsufficientSamplesError(MLMCError):
    """A statistic was requested from a level without enough samples"""

    status = "insufficient_samples"

    def __init__(self, level: Optional[int], required: int, available: int):
        self.level = level
        self.required = required
        self.available = available
        where = f"level {level}" if level is not None else "statistics"
        super().__init__(f"{where}: need {required} samples, have {available}")


class InvalidSplitError(MLMCError):
    """Splitting parameter outside (0, 1)"""

    status = "invalid_split"

    def __init__(self, theta: float):
        self.theta = theta
        super().__init__(f"theta must lie in (0, 1), got {theta!r}")


class CalibrationUnavailableError(MLMCError):
    """Not enough data to fit the error models"""

    status = "calibration_unavailable"


class ToleranceUnreachableError(MLMCError):
    """No admissible hierarchy reaches the requested tolerance"""

    status = "tolerance_unreachable"


class IterationLimitError(ToleranceUnreachableError):
    """The continuation loop hit its iteration cap"""


class EstimateUndefinedError(MLMCError):
    """The standard bias estimate needs at least three levels"""

    status = "estimate_undefined"


class ConfigError(MLMCError):
    """Invalid experiment configuration"""

    status = "config_error"

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class ManifestMismatchError(MLMCError):
    """Manifests being compared do not describe the same experiment grid"""

    status = "manifest_mismatch"
