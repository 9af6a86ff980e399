"""codiq-trainkit: offline feature extraction and value-network training.

Produces the feature JSONL and CDQW weight files the scoring engine
consumes; the files are the only contract between the two packages.
"""

from .data import TrainingExample, build_examples, positive_class_weight, read_labels
from .export import encode_weights, export_weights, load_exported
from .extract import (
    extract_features,
    extract_question_features,
    sample_count_for_window,
    sampling_positions,
)
from .model import TrainedWeights, ValueNet, predict_scores, restore, snapshot
from .runtime import HuggingFaceRuntime, RuntimeUnavailable, StubRuntime, build_runtime
from .train import TrainConfig, TrainResult, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "HuggingFaceRuntime",
    "RuntimeUnavailable",
    "StubRuntime",
    "TrainConfig",
    "TrainResult",
    "TrainedWeights",
    "TrainingExample",
    "ValueNet",
    "build_examples",
    "build_runtime",
    "encode_weights",
    "evaluate",
    "export_weights",
    "extract_features",
    "extract_question_features",
    "load_exported",
    "positive_class_weight",
    "predict_scores",
    "read_labels",
    "restore",
    "sample_count_for_window",
    "sampling_positions",
    "snapshot",
    "train",
]
