"""Toy benchmarks, backbone construction, and training loops."""

from .datasets import (
    Dataset, load_dataset, make_adding, make_copy_memory,
    make_field_targets, one_hot, save_dataset,
)
from .backbone import Backbone, BackboneConfig, build_backbone
from .train import (
    TrainConfig, TrainResult, TrainingError, adding_metrics,
    copy_memory_metrics, eval_resolution_shift, fit_field, train,
)

__all__ = [
    "Dataset", "load_dataset", "make_adding", "make_copy_memory",
    "make_field_targets", "one_hot", "save_dataset",
    "Backbone", "BackboneConfig", "build_backbone",
    "TrainConfig", "TrainResult", "TrainingError", "adding_metrics",
    "copy_memory_metrics", "eval_resolution_shift", "fit_field", "train",
]
