"""Supervised source training with label-smoothed cross-entropy."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import GradTape, Matrix
from .data import LabeledSet
from .errors import ConfigError, NumericalError, ShapeError
from .network import ArchSpec, Bound, ModelBundle, init_model, sgd_step

log = logging.getLogger(__name__)


def smooth_labels(labels, K: int, tau: float) -> np.ndarray:
    """(1 - tau) * onehot + tau / K."""
    if not (0.0 <= tau < 1.0):
        raise ConfigError(f"tau must lie in [0, 1), got {tau}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ConfigError(f"labels must lie in [0, {K})")
    out = np.full((labels.size, K), tau / K)
    out[np.arange(labels.size), labels] += 1.0 - tau
    return out


def smoothed_ce_loss(logits, targets) -> Matrix:
    """Batch mean of -sum_k target_k * log softmax(logits)_k."""
    logits = ad.as_matrix(logits)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != logits.shape:
        raise ShapeError(f"logits {logits.shape} and targets {targets.shape} differ")
    return -ad.mean_all(ad.log_softmax_rows(logits) * targets) * logits.cols


@dataclass
class SourceConfig:
    arch: ArchSpec = field(default_factory=ArchSpec)
    epochs: int = 200
    lr_backbone: float = 0.5
    lr_classifier: float = 0.5
    tau: float = 0.1
    seed: int = 0


def accuracy(bundle: ModelBundle, features, labels) -> float:
    logits = Bound.bind(bundle).logits(features).value
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


def pretrain(source: LabeledSet, cfg: SourceConfig) -> tuple[ModelBundle, list[dict]]:
    """Full-batch SGD on the source set. Returns the model and per-epoch
    ``{epoch, loss, source_acc}`` records."""
    if len(source) == 0:
        raise ConfigError("source set is empty")
    if cfg.arch.class_count != source.num_classes or cfg.arch.input_dim != source.features.shape[1]:
        raise ConfigError("arch does not match the source data")
    bundle = init_model(cfg.arch, cfg.seed)
    targets = smooth_labels(source.labels, source.num_classes, cfg.tau)
    lrs = {"encoder": cfg.lr_backbone, "classifier": cfg.lr_classifier}
    history = []
    for epoch in range(1, cfg.epochs + 1):
        tape = GradTape()
        model = Bound.bind(bundle, tape, trainable=("encoder", "classifier"))
        logits = model.logits(source.features)
        loss = smoothed_ce_loss(logits, targets)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericalError(f"source loss is {value} at epoch {epoch}", epoch=epoch, term="L_ce")
        grads = ad.backward(loss, tape)
        acc = float(np.mean(np.argmax(logits.value, axis=1) == source.labels))
        history.append({"epoch": epoch, "loss": value, "source_acc": acc})
        sgd_step(bundle, grads, lrs)
    if history:
        log.info("source training done: loss %.4f acc %.4f", history[-1]["loss"], history[-1]["source_acc"])
    return bundle, history


def write_source_metrics(history: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "source_acc"])
        for rec in history:
            w.writerow([rec["epoch"], format(rec["loss"], ".17g"), format(rec["source_acc"], ".17g")])
