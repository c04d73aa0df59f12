"""Gap transition between intermediate and target samples.

Memory banks cache every target sample's latest feature and softmax score.
A target sample's soft label is the mean stored score of its ``r`` nearest
bank neighbours; it is mixed with a one-hot intermediate label, and the
model is pulled towards the mixed label on the mixed input with a KL loss.

The stored prediction is called ``scores`` here (the projector is ``p``
elsewhere).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Matrix
from .errors import ConfigError
from .network import Bound, ModelBundle


@dataclass
class MemoryBanks:
    features: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return self.features.shape[0]

    def snapshot(self) -> "MemoryBanks":
        return MemoryBanks(self.features.copy(), self.scores.copy())


def init_banks(bundle: ModelBundle, target_view) -> MemoryBanks:
    model = Bound.bind(bundle)
    z = model.encode(target_view.features)
    scores = ad.softmax(model.classify(z).value)
    return MemoryBanks(z.value.copy(), scores)


def update_banks(banks: MemoryBanks, ids, z_batch, p_batch) -> None:
    """Overwrite the rows ``ids``; no blending with the old values."""
    ids = np.asarray(ids, dtype=np.int64)
    if np.unique(ids).size != ids.size:
        raise ValueError("duplicate ids in a single bank update")
    if ids.size and (ids.min() < 0 or ids.max() >= len(banks)):
        raise IndexError("bank update id out of range")
    banks.features[ids] = np.asarray(z_batch, dtype=np.float64)
    banks.scores[ids] = np.asarray(p_batch, dtype=np.float64)


def soft_vote(banks: MemoryBanks, z_query, r: int, exclude_id: int | None = None) -> np.ndarray:
    """Mean stored score of the ``r`` bank rows nearest to ``z_query``
    (cosine distance, ties to the lower id)."""
    return soft_vote_batch(banks, np.atleast_2d(z_query), r,
                           None if exclude_id is None else [exclude_id])[0]


def soft_vote_batch(banks: MemoryBanks, z_queries, r: int, exclude_ids=None) -> np.ndarray:
    n = len(banks)
    available = n - (1 if exclude_ids is not None else 0)
    if not (1 <= r <= available):
        raise ConfigError(f"r={r} but only {available} bank rows are available")
    dist = ad.cosine_distance_matrix(z_queries, banks.features)
    if exclude_ids is not None:
        exclude_ids = np.asarray(exclude_ids, dtype=np.int64)
        dist[np.arange(dist.shape[0]), exclude_ids] = np.inf
    # stable sort keeps lower ids first among equal distances
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :r]
    return banks.scores[nearest].mean(axis=1)


def onehot(labels, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, K))
    out[np.arange(labels.size), labels] = 1.0
    return out


@dataclass
class MixedBatch:
    inputs: np.ndarray
    soft_labels: np.ndarray
    lambdas: np.ndarray


def mixup(x_m, q_m, x_t, q_t, lam) -> MixedBatch:
    """Row-wise ``lam * (x_m, q_m) + (1 - lam) * (x_t, q_t)``; ``lam`` is a
    scalar or one value per row."""
    x_m, q_m = np.atleast_2d(x_m), np.atleast_2d(q_m)
    x_t, q_t = np.atleast_2d(x_t), np.atleast_2d(q_t)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (x_m.shape[0],)).copy()
    if np.any((lam < 0) | (lam > 1)) or not np.all(np.isfinite(lam)):
        raise ValueError("mixup coefficient must lie in [0, 1]")
    col = lam[:, None]
    return MixedBatch(col * x_m + (1 - col) * x_t, col * q_m + (1 - col) * q_t, lam)


def kl_to_prediction(targets: np.ndarray, logits: Matrix) -> Matrix:
    """Batch mean of KL(targets || softmax(logits)), with 0 log 0 = 0."""
    targets = np.asarray(targets, dtype=np.float64)
    safe = np.where(targets > 0, targets, 1.0)
    neg_entropy = float(np.sum(targets * np.log(safe))) / targets.shape[0]
    cross = -ad.mean_all(ad.log_softmax_rows(logits) * targets) * targets.shape[1]
    return cross + neg_entropy


def gap_loss(model, mixed: MixedBatch) -> Matrix:
    if mixed.inputs.shape[0] == 0:
        raise ValueError("empty mixed batch")
    model = model if isinstance(model, Bound) else Bound.bind(model)
    return kl_to_prediction(mixed.soft_labels, model.logits(mixed.inputs))
