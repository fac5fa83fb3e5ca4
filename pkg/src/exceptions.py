class FlowSynthException(Exception):
    """Base exception for all library errors."""


class ConfigError(FlowSynthException):
    """Exception raised when settings, presets or CLI flags are invalid or conflict."""


# Data and schema exceptions
class DataError(FlowSynthException):
    """Base exception for dataset-related errors."""


class SchemaError(DataError):
    """Exception raised when a flow table or schema file does not match the feature schema."""


class EmptyDatasetError(DataError):
    """Exception raised when a flow table holds no data rows."""


class RowParseError(DataError):
    """Exception raised when a numeric cell cannot be parsed."""

    def __init__(self, message: str, row_index: int, column: str):
        super().__init__(message)
        self.row_index = row_index
        self.column = column


class LeakageError(DataError):
    """Exception raised when fitting is attempted on data not tagged as the training split."""


class ContainerFormatError(DataError):
    """Exception raised when a binary container has a wrong magic, version or layout."""


class PlanError(FlowSynthException):
    """Exception raised when an augmentation plan violates its invariants."""


class CheckpointError(FlowSynthException):
    """Exception raised when a checkpoint cannot be read or does not match the schema."""


# Training exceptions
class NumericAbortError(FlowSynthException):
    """Exception raised when a loss becomes non-finite and the run is aborted."""

    def __init__(self, message: str, record: object | None = None):
        super().__init__(message)
        self.record = record


class ClassifierError(FlowSynthException):
    """Exception raised for unknown IDS kinds or input width mismatches."""


# Evaluation exceptions
class MetricError(FlowSynthException):
    """Exception raised when a metric is undefined for its input."""


class ProtocolError(FlowSynthException):
    """Exception raised when an evaluation protocol invariant is violated."""
