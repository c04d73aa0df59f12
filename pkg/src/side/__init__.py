"""Source-free domain adaptation on a small numpy autodiff core.

Modules: ``autodiff`` (matrices and the gradient tape), ``data`` (synthetic
shifted pairs and CSV I/O), ``network`` (encoder, classifier, projector,
momentum encoder), ``source`` (label-smoothed pretraining), ``cidf``
(intermediate-sample selection), ``idgt`` (memory banks and mixup gap loss),
``cvcl`` (cross-view consistency and momentum update), ``trainer``
(the adaptation loop) and ``cli``.
"""

from .config import TrainConfig
from .data import FeatureView, LabeledSet, ShiftSpec, generate_pair, read_dataset, write_dataset
from .network import ArchSpec, ModelBundle, init_model, load_checkpoint, save_checkpoint
from .source import SourceConfig, pretrain
from .trainer import MetricsRecord, adapt, evaluate, label_monitor

__all__ = [
    "ArchSpec", "FeatureView", "LabeledSet", "MetricsRecord", "ModelBundle", "ShiftSpec",
    "SourceConfig", "TrainConfig", "adapt", "evaluate", "generate_pair", "init_model",
    "label_monitor", "load_checkpoint", "pretrain", "read_dataset", "save_checkpoint",
    "write_dataset",
]
