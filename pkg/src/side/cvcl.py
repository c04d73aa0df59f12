"""Cross-view consistency between the online and momentum encoders.

Each target sample is augmented twice. The sample-level term compares
l2-normalized projections of the two views across the two encoders; the
class-level term pushes the cross-view prediction correlation matrix
towards the identity. The momentum branch is always a constant target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Matrix
from .errors import ConfigError
from .network import Bound, ModelBundle
from .rng import PortableRng


@dataclass
class AugSpec:
    jitter_sigma: float = 0.05
    scale_range: float = 0.1
    rotation_max_deg: float = 10.0

    def validate(self):
        if self.jitter_sigma < 0:
            raise ConfigError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")
        if not (0.0 <= self.scale_range < 1.0):
            raise ConfigError(f"scale_range must lie in [0, 1), got {self.scale_range}")
        if self.rotation_max_deg < 0:
            raise ConfigError(f"rotation_max_deg must be >= 0, got {self.rotation_max_deg}")
        return self


def augment(x, spec: AugSpec, rng: PortableRng) -> np.ndarray:
    """One random view per row: ``scale * rotate(x) + noise``. Rotation by a
    uniform angle in +-rotation_max_deg applies to 2-D inputs only."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n, d = x.shape
    scales = rng.uniform(n, 1.0 - spec.scale_range, 1.0 + spec.scale_range)
    out = x
    if d == 2 and spec.rotation_max_deg > 0:
        theta = np.radians(rng.uniform(n, -spec.rotation_max_deg, spec.rotation_max_deg))
        c, s = np.cos(theta), np.sin(theta)
        out = np.stack([c * x[:, 0] - s * x[:, 1], s * x[:, 0] + c * x[:, 1]], axis=1)
    out = scales[:, None] * out
    if spec.jitter_sigma > 0:
        out = out + rng.normal(n * d, spec.jitter_sigma).reshape(n, d)
    return out


def augment_views(x, spec: AugSpec, rng: PortableRng) -> tuple[np.ndarray, np.ndarray]:
    spec.validate()
    return augment(x, spec, rng.substream("A")), augment(x, spec, rng.substream("B"))


def nmse(a: Matrix, b: Matrix) -> Matrix:
    """Batch mean of ||xi(a) - xi(b)||^2 with row-wise l2 normalization."""
    diff = ad.l2_normalize_rows(a) - ad.l2_normalize_rows(b)
    return ad.sum_all(diff * diff) * (1.0 / a.rows)


def _models(model, target):
    model = model if isinstance(model, Bound) else Bound.bind(model)
    return model, model.detached() if target is None else target


def sample_consistency_loss(model, x_a, x_b, target: Bound | None = None) -> Matrix:
    """Symmetric normalized MSE between online and momentum projections.

    ``target`` evaluates the momentum branch (momentum encoder plus the
    projector); it defaults to a constant copy of ``model``.
    """
    model, target = _models(model, target)
    online_a = model.project(model.encode(x_a))
    online_b = model.project(model.encode(x_b))
    target_b = target.project(target.encode(x_b, "momentum"))
    target_a = target.project(target.encode(x_a, "momentum"))
    return nmse(online_a, target_b) + nmse(target_a, online_b)


def class_consistency_loss(p_a, p_b) -> Matrix:
    """(L1(xi(M), I) + L1(xi(M^T), I)) / 2K with M = p_a^T p_b and xi the
    row-wise l2 normalization."""
    p_a, p_b = ad.as_matrix(p_a), ad.as_matrix(p_b)
    K = p_a.cols
    m = p_a.T @ p_b
    eye = np.eye(K)
    rows = ad.absolute(ad.l2_normalize_rows(m) - eye)
    cols = ad.absolute(ad.l2_normalize_rows(m.T) - eye)
    return (ad.sum_all(rows) + ad.sum_all(cols)) * (1.0 / (2 * K))


def consistency_terms(model, x_a, x_b, target: Bound | None = None) -> tuple[Matrix, Matrix]:
    """(L_sam, L_cls) sharing one set of encoder passes."""
    model, target = _models(model, target)
    z_a = model.encode(x_a)
    z_b = model.encode(x_b)
    zm_a = target.encode(x_a, "momentum")
    zm_b = target.encode(x_b, "momentum")
    l_sam = nmse(model.project(z_a), target.project(zm_b)) + nmse(
        target.project(zm_a), model.project(z_b)
    )
    p_a = ad.softmax_rows(model.classify(z_a))
    p_b = ad.softmax(target.classify(zm_b).value)
    return l_sam, class_consistency_loss(p_a, p_b)


def consistency_loss(model, x_a, x_b, epsilon: float, target: Bound | None = None) -> Matrix:
    l_sam, l_cls = consistency_terms(model, x_a, x_b, target)
    return l_sam + l_cls * epsilon


def momentum_update(bundle: ModelBundle, omega: float) -> None:
    """theta' <- omega * theta' + (1 - omega) * theta, in place."""
    if not (0.0 <= omega <= 1.0) or math.isnan(omega):
        raise ConfigError(f"omega must lie in [0, 1], got {omega}")
    online = bundle.params["encoder"]
    for name, shadow in bundle.params["momentum_encoder"].items():
        shadow *= omega
        shadow += (1.0 - omega) * online[name]
