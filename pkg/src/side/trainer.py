"""Source-free adaptation loop, evaluation and metric/embedding export."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import GradTape
from .cidf import CycleSchedule, IntermediateSet, extract_prototypes, intermediate_loss, refresh_due, select_intermediate
from .config import TrainConfig
from .cvcl import augment_views, consistency_terms, momentum_update
from .data import FeatureView, LabeledSet
from .errors import ConfigError, NumericalError
from .idgt import gap_loss, init_banks, mixup, onehot, soft_vote_batch, update_banks
from .network import Bound, ModelBundle, reinit_projector, sgd_step
from .rng import PortableRng

log = logging.getLogger(__name__)

LOSS_TERMS = ("L_int", "L_gap", "L_sam", "L_cls")
Monitor = Callable[[ModelBundle, IntermediateSet], tuple[float, float]]


@dataclass
class MetricsRecord:
    epoch: int
    L_int: float
    L_gap: float
    L_sam: float
    L_cls: float
    target_accuracy: float
    intermediate_accuracy: float
    refresh_flag: bool

    def total(self, epsilon: float) -> float:
        return self.L_int + self.L_gap + self.L_sam + epsilon * self.L_cls


def evaluate(bundle: ModelBundle, labeled: LabeledSet) -> float:
    """Argmax accuracy; ties go to the lower class index."""
    logits = Bound.bind(bundle).logits(labeled.features).value
    return float(np.mean(np.argmax(logits, axis=1) == labeled.labels))


def label_monitor(target: LabeledSet) -> Monitor:
    """Metric callback holding the target labels; the optimizer never sees them."""

    def monitor(bundle, inter):
        inter_acc = inter.accuracy(target.labels) if inter is not None else float("nan")
        return evaluate(bundle, target), inter_acc

    return monitor


def _batches(order: np.ndarray, size: int):
    for start in range(0, order.size, size):
        yield order[start:start + size]


def adapt(
    source_model: ModelBundle,
    target_view: FeatureView,
    cfg: TrainConfig,
    monitor: Monitor | None = None,
    selections: list | None = None,
) -> tuple[ModelBundle, list[MetricsRecord]]:
    """Adapt ``source_model`` to the unlabeled ``target_view``.

    Each epoch: reselect intermediate samples when due (always at epoch 1),
    then per mini-batch build neighbour soft labels from the memory banks,
    compute the intermediate, gap and consistency losses, update the
    momentum encoder and take one SGD step on their sum. ``monitor``
    supplies accuracies for the metrics only; ``selections`` (if given)
    collects every IntermediateSet produced.
    """
    if not isinstance(target_view, FeatureView):
        raise TypeError("adapt takes a FeatureView; labels must not reach adaptation")
    cfg.validate()
    if len(target_view) == 0:
        raise ConfigError("target set is empty")
    bundle = source_model.copy()
    if cfg.epochs == 0:
        return bundle, []

    X = target_view.features
    n, K = X.shape[0], bundle.arch.class_count
    reinit_projector(bundle, cfg.seed)
    bundle.params["momentum_encoder"] = {k: v.copy() for k, v in bundle.params["encoder"].items()}
    source_prototypes = extract_prototypes(bundle).copy()
    schedule = CycleSchedule(cfg.epochs, cfg.alpha)
    log.info("refresh epochs %s (%d cycles)", schedule.refresh_epochs, schedule.cycles)
    trainable = ("encoder", "projector") if cfg.freeze_classifier else ("encoder", "classifier", "projector")
    lrs = {"encoder": cfg.lr_backbone, "classifier": cfg.lr_classifier, "projector": cfg.lr_projector}
    r = min(cfg.r, n - 1) if n > 1 else 1

    banks = init_banks(bundle, target_view)
    rng = PortableRng(cfg.seed, "adapt")
    inter: IntermediateSet | None = None
    history = []
    for epoch in range(1, cfg.epochs + 1):
        refresh = epoch == 1 or (cfg.cyclic_filtering and refresh_due(schedule, epoch))
        if refresh:
            protos = source_prototypes if cfg.frozen_prototypes else extract_prototypes(bundle)
            inter = select_intermediate(bundle, target_view, protos, cfg.n_m, epoch)
            if selections is not None:
                selections.append(inter)
        inter_ids, inter_labels = inter.ids, inter.labels

        erng = rng.substream(f"epoch{epoch}")
        sums = dict.fromkeys(LOSS_TERMS, 0.0)
        n_batches = 0
        for b, batch in enumerate(_batches(erng.substream("shuffle").permutation(n), cfg.batch_size)):
            brng = erng.substream(f"batch{b}")
            size = batch.size
            x_t = X[batch]

            # pseudo-labels from the banks, then refresh the banks with this batch
            live = Bound.bind(bundle)
            z_t = live.encode(x_t).value
            q_t = soft_vote_batch(banks, z_t, r, exclude_ids=batch) if n > 1 else ad.softmax(live.classify(z_t).value)
            update_banks(banks, batch, z_t, ad.softmax(live.classify(z_t).value))

            tape = GradTape()
            model = Bound.bind(bundle, tape, trainable)

            int_pick = brng.substream("int").permutation(len(inter_ids))[:cfg.batch_size]
            l_int = intermediate_loss(
                model, X[inter_ids[int_pick]], inter_labels[int_pick], K, cfg.tau, cfg.gamma
            )

            pair = brng.substream("pair").integers(size, len(inter_ids))
            if cfg.mix_lambda is None:
                lam = brng.substream("lambda").beta(cfg.beta, cfg.beta, size)
            else:
                lam = np.full(size, cfg.mix_lambda)
            mixed = mixup(X[inter_ids[pair]], onehot(inter_labels[pair], K), x_t, q_t, lam)
            l_gap = gap_loss(model, mixed)

            x_a, x_b = augment_views(x_t, cfg.aug, brng.substream("aug"))
            l_sam, l_cls = consistency_terms(model, x_a, x_b)

            terms = {"L_int": l_int, "L_gap": l_gap, "L_sam": l_sam, "L_cls": l_cls}
            for name, term in terms.items():
                value = term.item()
                if not math.isfinite(value):
                    raise NumericalError(f"{name} is {value} at epoch {epoch}", epoch=epoch, term=name)
                sums[name] += value
            n_batches += 1

            total = l_gap + l_sam + l_cls * cfg.epsilon
            if l_int.traced:
                total = total + l_int
            grads = ad.backward(total, tape)
            momentum_update(bundle, cfg.omega)
            sgd_step(bundle, grads, lrs)

        target_acc, inter_acc = monitor(bundle, inter) if monitor else (float("nan"), float("nan"))
        rec = MetricsRecord(
            epoch, *(sums[k] / n_batches for k in LOSS_TERMS), target_acc, inter_acc, refresh
        )
        history.append(rec)
        log.debug("epoch %d %s", epoch, rec)
    return bundle, history


def write_metrics(history: list[MetricsRecord], path) -> None:
    names = list(MetricsRecord.__dataclass_fields__)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for rec in history:
            row = []
            for name in names:
                v = getattr(rec, name)
                if isinstance(v, bool):
                    row.append(int(v))
                elif isinstance(v, float):
                    row.append(format(v, ".17g"))
                else:
                    row.append(v)
            w.writerow(row)


def summarize(history: list[MetricsRecord], source_only_acc: float) -> dict:
    return {
        "final_target_acc": history[-1].target_accuracy if history else source_only_acc,
        "source_only_acc": source_only_acc,
        "per_refresh_intermediate_acc": [
            {"epoch": rec.epoch, "accuracy": rec.intermediate_accuracy}
            for rec in history
            if rec.refresh_flag
        ],
    }


def write_summary(summary: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def export_embeddings(bundle: ModelBundle, view: FeatureView, path, intermediate: IntermediateSet | None = None) -> None:
    """CSV ``id,is_intermediate,f0..f{D-1}`` of encoder features."""
    z = Bound.bind(bundle).encode(view.features).value
    chosen = set(intermediate.ids.tolist()) if intermediate is not None else set()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "is_intermediate"] + [f"f{j}" for j in range(z.shape[1])])
        for i, row in zip(view.ids, z):
            w.writerow([int(i), int(int(i) in chosen)] + [format(v, ".17g") for v in row])
