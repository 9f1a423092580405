"""Exception hierarchy shared by every churnlab module."""


class ChurnError(ValueError):
    """Base class for every error raised by the toolkit."""


class DatasetError(ChurnError):
    """The churn CSV could not be loaded or failed validation."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column!r}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class StatsError(ChurnError):
    """A statistic is undefined for the given input."""


class PreprocessError(ChurnError):
    """An encoder, scaler, transform or split could not be fitted or applied."""


class MetricError(ChurnError):
    """Metric inputs are malformed (length mismatch, unknown label, one class)."""


class ModelError(ChurnError):
    """Invalid hyperparameters or a model/table fingerprint mismatch."""


class FitError(ChurnError):
    """Training failed (degenerate classes, non-finite loss)."""


class ConvergenceError(FitError):
    """An iterative solver stopped at its iteration cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3g})")
        self.residual = residual


class ResampleError(ChurnError):
    """A class is too small for the requested resampling plan."""


class TuningError(ChurnError):
    """Cross-validation or grid search could not produce a result."""


class ReportError(ChurnError):
    """A manifest or report could not be written or read back."""


class ConfigError(ChurnError):
    """The config file or an override is invalid."""
