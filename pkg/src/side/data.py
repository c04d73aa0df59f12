"""Synthetic source/target pairs with a controlled covariate shift.

Two families:

``two_moons``
    Interleaved half circles of radius 1. Class 0 is ``(cos t, sin t)``,
    class 1 is ``(1 - cos t, 0.5 - sin t)``, with ``t ~ U[0, pi)`` and
    isotropic Gaussian noise. The target is rotated about the origin by
    ``shift`` degrees.

``gauss_blobs``
    ``K`` isotropic Gaussians in ``d = len(shift)`` dimensions. Class ``k``
    has mean ``BLOB_RADIUS * (cos 2*pi*k/K, sin 2*pi*k/K, 0, ...)``
    (``BLOB_RADIUS * k`` on the line when d = 1). Target means are the source
    means plus ``shift``.

Source and target samples come from the ``source`` and ``target``
substreams of the ShiftSpec seed, so a zero shift gives two independent draws
from one distribution.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DatasetFormatError
from .rng import PortableRng

FAMILIES = ("two_moons", "gauss_blobs")
BLOB_RADIUS = 3.0


@dataclass
class LabeledSet:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    ids: np.ndarray = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.features.shape[0]
        if self.ids is None:
            self.ids = np.arange(n)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (n,) or self.ids.shape != (n,):
            raise ValueError("features, labels and ids disagree on sample count")
        if not np.array_equal(np.sort(self.ids), np.arange(n)):
            raise ValueError("ids must be unique and dense in 0..n-1")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        missing = set(range(self.num_classes)) - set(self.labels.tolist())
        if missing:
            raise ValueError(f"classes without samples: {sorted(missing)}")

    def __len__(self):
        return self.features.shape[0]

    def unlabeled(self) -> "FeatureView":
        """Features-only view handed to adaptation code."""
        return FeatureView(self.features.copy(), self.ids.copy())

    def __eq__(self, other):
        return (
            isinstance(other, LabeledSet)
            and self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
        )


@dataclass(frozen=True)
class FeatureView:
    """Target samples without labels. This is all that adaptation ever sees."""

    features: np.ndarray
    ids: np.ndarray

    def __len__(self):
        return self.features.shape[0]


@dataclass
class ShiftSpec:
    family: str = "two_moons"
    K: int = 2
    n_per_class: int = 200
    noise_sigma: float = 0.15
    shift: float | list[float] = 45.0
    seed: int = 0

    def validate(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family: expected one of {FAMILIES}, got {self.family!r}")
        if self.family == "two_moons":
            if self.K != 2:
                raise ConfigError(f"K: two_moons has exactly 2 classes, got {self.K}")
            if not isinstance(self.shift, (int, float)):
                raise ConfigError("shift: two_moons expects a rotation angle in degrees")
        else:
            if self.K < 2:
                raise ConfigError(f"K: gauss_blobs needs at least 2 classes, got {self.K}")
            if isinstance(self.shift, (int, float)) or len(self.shift) < 1:
                raise ConfigError("shift: gauss_blobs expects a translation vector")
        if self.n_per_class < 1:
            raise ConfigError(f"n_per_class: must be >= 1, got {self.n_per_class}")
        if not (self.noise_sigma >= 0):
            raise ConfigError(f"noise_sigma: must be >= 0, got {self.noise_sigma}")
        return self

    @property
    def dim(self) -> int:
        return 2 if self.family == "two_moons" else len(self.shift)

    def manifest(self, role: str) -> dict:
        out = asdict(self)
        out["role"] = role
        return out


def rotation(degrees: float) -> np.ndarray:
    theta = math.radians(degrees)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def blob_means(K: int, d: int) -> np.ndarray:
    means = np.zeros((K, d))
    angles = 2 * np.pi * np.arange(K) / K
    if d == 1:
        means[:, 0] = BLOB_RADIUS * np.arange(K)
    else:
        means[:, 0] = BLOB_RADIUS * np.cos(angles)
        means[:, 1] = BLOB_RADIUS * np.sin(angles)
    return means


def _labels(K, n_per_class):
    return np.repeat(np.arange(K), n_per_class)


def _moons(rng: PortableRng, n_per_class: int, noise: float) -> np.ndarray:
    t = np.pi * rng.uniform(2 * n_per_class)
    t0, t1 = t[:n_per_class], t[n_per_class:]
    outer = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    inner = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    x = np.concatenate([outer, inner])
    return x + rng.normal(x.size, noise).reshape(x.shape)


def _blobs(rng: PortableRng, means: np.ndarray, n_per_class: int, noise: float) -> np.ndarray:
    centers = np.repeat(means, n_per_class, axis=0)
    return centers + rng.normal(centers.size, noise).reshape(centers.shape)


def generate_pair(spec: ShiftSpec, source_label: str = "source") -> tuple[LabeledSet, LabeledSet]:
    """Draw (source, target). ``source_label`` picks an alternative source
    substream, e.g. for a held-out source sample."""
    spec.validate()
    root = PortableRng(spec.seed, spec.family)
    src_rng, tgt_rng = root.substream(source_label), root.substream("target")
    labels = _labels(spec.K, spec.n_per_class)
    if spec.family == "two_moons":
        xs = _moons(src_rng, spec.n_per_class, spec.noise_sigma)
        xt = _moons(tgt_rng, spec.n_per_class, spec.noise_sigma) @ rotation(spec.shift).T
    else:
        means = blob_means(spec.K, spec.dim)
        xs = _blobs(src_rng, means, spec.n_per_class, spec.noise_sigma)
        xt = _blobs(tgt_rng, means + np.asarray(spec.shift, dtype=np.float64), spec.n_per_class, spec.noise_sigma)
    return LabeledSet(xs, labels, spec.K), LabeledSet(xt, labels.copy(), spec.K)


def _manifest_path(path: Path) -> Path:
    return path.with_suffix(".json")


def write_dataset(ds: LabeledSet, path, manifest: dict | None = None):
    """CSV with header ``id,label,f0..f{d-1}``, floats at 17 significant digits."""
    path = Path(path)
    d = ds.features.shape[1]
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + [f"f{j}" for j in range(d)])
        for i in range(len(ds)):
            w.writerow([int(ds.ids[i]), int(ds.labels[i])] + [format(v, ".17g") for v in ds.features[i]])
    if manifest is not None:
        _manifest_path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def read_manifest(path) -> dict | None:
    mpath = _manifest_path(Path(path))
    if not mpath.exists():
        return None
    return json.loads(mpath.read_text(encoding="utf-8"))


def read_dataset(path, num_classes: int | None = None) -> LabeledSet:
    """Parse a dataset CSV. ``num_classes`` falls back to the sidecar
    manifest's ``K``, then to ``max(label) + 1``."""
    path = Path(path)
    if num_classes is None:
        manifest = read_manifest(path)
        if manifest is not None:
            num_classes = int(manifest["K"])
    ids, labels, rows = [], [], []
    seen = set()
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetFormatError("empty file", line=1)
        d = len(header) - 2
        if d < 1 or header != ["id", "label"] + [f"f{j}" for j in range(d)]:
            raise DatasetFormatError(f"bad header {header!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 2:
                raise DatasetFormatError(f"expected {d + 2} fields, got {len(row)}", line=lineno)
            try:
                sid, lab = int(row[0]), int(row[1])
                feats = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DatasetFormatError(str(exc), line=lineno) from None
            if not all(math.isfinite(v) for v in feats):
                raise DatasetFormatError("non-finite feature", line=lineno)
            if sid in seen:
                raise DatasetFormatError(f"duplicate id {sid}", line=lineno)
            if lab < 0 or (num_classes is not None and lab >= num_classes):
                raise DatasetFormatError(f"label {lab} outside [0, {num_classes})", line=lineno)
            seen.add(sid)
            ids.append(sid)
            labels.append(lab)
            rows.append(feats)
    if not rows:
        raise DatasetFormatError("no samples", line=2)
    if num_classes is None:
        num_classes = max(labels) + 1
    order = np.argsort(ids, kind="stable")
    try:
        return LabeledSet(
            np.array(rows)[order], np.array(labels)[order], num_classes, np.array(ids)[order]
        )
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from None
