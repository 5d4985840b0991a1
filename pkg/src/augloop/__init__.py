"""Two-level data augmentation workbench for intent classification."""

from augloop.classifier import ClassifierModel, TrainConfig, train
from augloop.corpus import IntentVocabulary, LabeledDataset, Post
from augloop.errors import (
    AugloopError,
    ConfigError,
    ConflictError,
    NotFoundError,
    StateError,
    TrainingError,
)
from augloop.ingest import CleanReport, dedup, ingest_dump
from augloop.metrics import (
    MetricsReport,
    SummaryRow,
    evaluate,
    f1,
    precision,
    recall,
    select_low_f1,
)
from augloop.pipeline import PipelineConfig, report, run_pipeline
from augloop.qa import QAService
from augloop.screening import ScreeningService
from augloop.synthgen import GenParams, StopThresholds, should_stop

__version__ = "0.1.0"

__all__ = [
    "AugloopError",
    "ClassifierModel",
    "CleanReport",
    "ConfigError",
    "ConflictError",
    "GenParams",
    "IntentVocabulary",
    "LabeledDataset",
    "MetricsReport",
    "NotFoundError",
    "PipelineConfig",
    "Post",
    "QAService",
    "ScreeningService",
    "StateError",
    "StopThresholds",
    "SummaryRow",
    "TrainConfig",
    "TrainingError",
    "dedup",
    "evaluate",
    "f1",
    "ingest_dump",
    "precision",
    "recall",
    "report",
    "run_pipeline",
    "select_low_f1",
    "should_stop",
    "train",
    "__version__",
]
