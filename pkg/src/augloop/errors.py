"""Shared exception types."""


class AugloopError(Exception):
    """Base class for all augloop errors."""


class DatasetFormatError(AugloopError):
    """A dataset file violates the JSONL post schema."""


class SplitError(AugloopError):
    """A stratified split cannot be produced for the given dataset."""


class TrainingError(AugloopError):
    """Classifier training preconditions are not met."""


class AdapterProtocolError(AugloopError):
    """An external classifier child process violated the line protocol."""


class TemplateError(AugloopError):
    """A prompt template is unknown or cannot be rendered."""


class GenerationError(AugloopError):
    """The generator endpoint failed or returned an unusable payload."""


class IngestError(AugloopError):
    """A forum dump cannot be parsed or a fetch target is not allowed."""


class MetricsError(AugloopError):
    """Metric inputs are inconsistent (mismatched intent sets, bad counts)."""


class StateError(AugloopError):
    """An operation was attempted in a state that forbids it."""


class ConflictError(StateError):
    """Optimistic-versioning conflict: the record changed under the writer."""


class NotFoundError(AugloopError):
    """A referenced post, run, or resource does not exist."""


class ConfigError(AugloopError):
    """A pipeline configuration value is missing or out of range."""


class PipelineError(AugloopError):
    """A pipeline stage failed; carries the stage name for the abort report."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage
