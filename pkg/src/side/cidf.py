"""Cyclic selection of intermediate samples near the class prototypes.

For each class k the target samples whose current features are closest
(cosine distance) to the classifier column w_k are taken as pseudo-labelled
"intermediate" samples. Selection is redone on a cyclic schedule as the
encoder adapts.

Collisions are resolved as a stable matching between classes (capacity
``n_m``) and samples (capacity one). A (sample, class) pair is ranked by
``(distance, class index, sample id)``; a sample wanted by two classes goes
to the one it is strictly closer to (lower class index on a tie), and the
losing class moves on to its next-nearest unclaimed sample.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Matrix
from .errors import ConfigError
from .network import Bound, ModelBundle
from .source import smooth_labels, smoothed_ce_loss

log = logging.getLogger(__name__)


@dataclass
class IntermediateSet:
    members: dict[int, list[int]]
    distances: dict[int, list[float]]
    epoch_selected: int

    @property
    def ids(self) -> np.ndarray:
        return np.array([i for k in sorted(self.members) for i in self.members[k]], dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        return np.array([k for k in sorted(self.members) for _ in self.members[k]], dtype=np.int64)

    def __len__(self):
        return sum(len(v) for v in self.members.values())

    def accuracy(self, true_labels) -> float:
        """Fraction of members whose assigned class matches ``true_labels[id]``."""
        if len(self) == 0:
            return float("nan")
        return float(np.mean(np.asarray(true_labels)[self.ids] == self.labels))


def extract_prototypes(bundle: ModelBundle) -> np.ndarray:
    """The classifier weight itself (D x K, column k = w_k); not a copy."""
    return bundle.classifier_weight


def _match(dist: np.ndarray, n_m: int) -> dict[int, list[int]]:
    """Class-proposing deferred acceptance on an (n x K) distance matrix."""
    n, K = dist.shape
    ids = np.arange(n)
    # per-class preference lists, ties by sample id
    prefs = [np.lexsort((ids, dist[:, k])) for k in range(K)]
    cursor = [0] * K
    held: list[list[int]] = [[] for _ in range(K)]
    owner = np.full(n, -1)
    free = list(range(K))
    while free:
        k = free.pop()
        while len(held[k]) < n_m and cursor[k] < n:
            i = int(prefs[k][cursor[k]])
            cursor[k] += 1
            j = owner[i]
            if j < 0:
                owner[i] = k
                held[k].append(i)
            elif (dist[i, k], k) < (dist[i, j], j):
                owner[i] = k
                held[k].append(i)
                held[j].remove(i)
                free.append(j)
    return {k: sorted(held[k], key=lambda i: (dist[i, k], i)) for k in range(K)}


def select_from_features(features: np.ndarray, prototypes: np.ndarray, n_m: int, epoch: int = 0) -> IntermediateSet:
    if n_m < 1:
        raise ConfigError(f"n_m must be >= 1, got {n_m}")
    if features.shape[0] < 1:
        raise ConfigError("target set is empty")
    dist = ad.cosine_distance_matrix(features, np.asarray(prototypes).T)
    members = _match(dist, n_m)
    distances = {k: [float(dist[i, k]) for i in v] for k, v in members.items()}
    return IntermediateSet(members, distances, epoch)


def select_intermediate(bundle: ModelBundle, target_view, prototypes, n_m: int, epoch: int = 0) -> IntermediateSet:
    """Top-``n_m`` target samples per class under the current encoder.

    Returned ids index rows of ``target_view.features``.
    """
    z = Bound.bind(bundle).encode(target_view.features).value
    return select_from_features(z, prototypes, n_m, epoch)


@dataclass
class CycleSchedule:
    E: int
    alpha: float
    refresh_epochs: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        cycles = math.floor(1.0 / self.alpha + 1e-12)
        epochs = set()
        for e in range(1, cycles + 1):
            t = math.floor(e * self.alpha * self.E + 0.5)
            if 0 < t < self.E:
                epochs.add(t)
        self.refresh_epochs = tuple(sorted(epochs))

    @property
    def cycles(self) -> int:
        return math.floor(1.0 / self.alpha + 1e-12)


def refresh_due(schedule: CycleSchedule, epoch: int) -> bool:
    return epoch in schedule.refresh_epochs


def intermediate_loss(model: Bound, x_m, y_m, K: int, tau: float, gamma: float) -> Matrix:
    """gamma * label-smoothed CE on intermediate samples; 0 when there are none."""
    y_m = np.asarray(y_m)
    if y_m.size == 0:
        log.warning("intermediate loss requested with an empty intermediate set")
        return Matrix(0.0)
    return smoothed_ce_loss(model.logits(x_m), smooth_labels(y_m, K, tau)) * gamma


def write_selection(sets: list[IntermediateSet], path) -> None:
    """CSV ``epoch,class,sample_id,distance``, one row per selected sample."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "class", "sample_id", "distance"])
        for s in sets:
            for k in sorted(s.members):
                for i, d in zip(s.members[k], s.distances[k]):
                    w.writerow([s.epoch_selected, k, i, format(d, ".17g")])
