"""Finite-difference checks of every training loss on random small instances."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .cidf import intermediate_loss
from .cvcl import consistency_terms, sample_consistency_loss, class_consistency_loss
from .idgt import MixedBatch, gap_loss, onehot
from .network import ArchSpec, Bound, init_model
from .rng import PortableRng
from .source import smooth_labels, smoothed_ce_loss

LOSSES = ("smoothed_ce", "L_int", "L_gap", "L_sam", "L_cls", "combined")


def random_instance(seed: int):
    """A small model with perturbed parameters (momentum encoder differs from
    the encoder) and random inputs: n <= 8, K <= 4, D <= 16."""
    rng = PortableRng(seed, "gradcheck")
    n = 2 + int(rng.integers(1, 7)[0])
    K = 2 + int(rng.integers(1, 3)[0])
    D = 4 + int(rng.integers(1, 13)[0])
    arch = ArchSpec(input_dim=3, encoder_hidden=[6], feature_dim=D, class_count=K,
                    projector_hidden=5, projector_out=4)
    bundle = init_model(arch, seed)
    for comp, layers in bundle.params.items():
        for name, arr in layers.items():
            arr += rng.normal(arr.size, 0.3).reshape(arr.shape)
    x = rng.normal(3 * n).reshape(n, 3)
    data = {
        "x": x,
        "x_a": x + rng.normal(3 * n, 0.2).reshape(n, 3),
        "x_b": x + rng.normal(3 * n, 0.2).reshape(n, 3),
        "labels": rng.integers(n, K),
    }
    lam = rng.uniform(n)[:, None]
    q_t = ad.softmax(rng.normal(n * K).reshape(n, K))
    data["mixed"] = MixedBatch(
        lam * data["x_a"] + (1 - lam) * x,
        lam * onehot(data["labels"], K) + (1 - lam) * q_t,
        lam[:, 0],
    )
    return bundle, data


def loss_fn(name: str, bundle, data, tau=0.1, gamma=0.1, epsilon=0.01):
    """A function of the trainable leaves suitable for finite_diff_check."""
    const = {k: ad.Matrix(v) for k, v in bundle.flat(("momentum_encoder",)).items()}
    K = bundle.arch.class_count
    # momentum branch held at the unperturbed parameters, as the tape sees it
    target = Bound.bind(bundle)

    def f(leaves):
        model = Bound(bundle.arch, {**const, **leaves})
        if name == "smoothed_ce":
            return smoothed_ce_loss(model.logits(data["x"]), smooth_labels(data["labels"], K, tau))
        if name == "L_int":
            return intermediate_loss(model, data["x"], data["labels"], K, tau, gamma)
        if name == "L_gap":
            return gap_loss(model, data["mixed"])
        if name == "L_sam":
            return sample_consistency_loss(model, data["x_a"], data["x_b"], target)
        if name == "L_cls":
            return consistency_terms(model, data["x_a"], data["x_b"], target)[1]
        if name == "combined":
            l_sam, l_cls = consistency_terms(model, data["x_a"], data["x_b"], target)
            return (
                intermediate_loss(model, data["x"], data["labels"], K, tau, gamma)
                + gap_loss(model, data["mixed"])
                + l_sam
                + l_cls * epsilon
            )
        raise KeyError(name)

    return f


def check(name: str, seed: int, step: float = 1e-5) -> float:
    bundle, data = random_instance(seed)
    params = bundle.flat(("encoder", "classifier", "projector"))
    return ad.finite_diff_check(loss_fn(name, bundle, data), params, step)


def run_all(instances: int = 20, step: float = 1e-5) -> dict[str, float]:
    """Worst relative error per loss over ``instances`` random draws."""
    return {name: max(check(name, s, step) for s in range(instances)) for name in LOSSES}
