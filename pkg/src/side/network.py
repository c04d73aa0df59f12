"""The model family f = h(g(x)) with a projection head and a momentum encoder.

Parameters live in plain numpy arrays inside :class:`ModelBundle`, keyed
``component -> layer name``. Forward passes go through :class:`Bound`, which
pairs a bundle with an optional tape: trainable components are watched on
the tape, everything else (always including the momentum encoder) enters as
constants.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import GradTape, Matrix
from .errors import ConfigError, ShapeError, TapeError
from .rng import PortableRng

COMPONENTS = ("encoder", "classifier", "projector", "momentum_encoder")
TRAINABLE = ("encoder", "classifier", "projector")


@dataclass
class ArchSpec:
    input_dim: int = 2
    encoder_hidden: list[int] = field(default_factory=lambda: [64])
    feature_dim: int = 16
    class_count: int = 2
    projector_hidden: int = 16
    projector_out: int = 16

    def validate(self):
        widths = [self.input_dim, self.feature_dim, self.class_count,
                  self.projector_hidden, self.projector_out, *self.encoder_hidden]
        if any(int(w) < 1 for w in widths):
            raise ConfigError(f"all layer widths must be >= 1, got {self}")
        return self

    def encoder_widths(self) -> list[int]:
        return [self.input_dim, *self.encoder_hidden, self.feature_dim]


def _mlp_params(rng: PortableRng, widths) -> dict[str, np.ndarray]:
    layers = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        layers[f"l{i}.weight"] = rng.uniform(fan_in * fan_out, -bound, bound).reshape(fan_in, fan_out)
        layers[f"l{i}.bias"] = np.zeros((1, fan_out))
    return layers


@dataclass
class ModelBundle:
    arch: ArchSpec
    params: dict[str, dict[str, np.ndarray]]
    seed: int = 0

    def copy(self) -> "ModelBundle":
        return ModelBundle(copy.deepcopy(self.arch), copy.deepcopy(self.params), self.seed)

    def flat(self, components=COMPONENTS) -> dict[str, np.ndarray]:
        return {
            f"{comp}.{name}": arr
            for comp in components
            for name, arr in self.params[comp].items()
        }

    def equals(self, other: "ModelBundle") -> bool:
        a, b = self.flat(), other.flat()
        return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)

    @property
    def classifier_weight(self) -> np.ndarray:
        """D x K; column k is the class-k prototype."""
        return self.params["classifier"]["weight"]


def init_model(arch: ArchSpec, seed: int = 0) -> ModelBundle:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases; momentum encoder copies the encoder."""
    arch.validate()
    rng = PortableRng(seed, "init")
    encoder = _mlp_params(rng.substream("encoder"), arch.encoder_widths())
    bound = 1.0 / np.sqrt(arch.feature_dim)
    classifier = {
        "weight": rng.substream("classifier")
        .uniform(arch.feature_dim * arch.class_count, -bound, bound)
        .reshape(arch.feature_dim, arch.class_count)
    }
    projector = _mlp_params(
        rng.substream("projector"), [arch.feature_dim, arch.projector_hidden, arch.projector_out]
    )
    params = {
        "encoder": encoder,
        "classifier": classifier,
        "projector": projector,
        "momentum_encoder": {k: v.copy() for k, v in encoder.items()},
    }
    return ModelBundle(arch, params, seed)


def reinit_projector(bundle: ModelBundle, seed: int) -> None:
    arch = bundle.arch
    bundle.params["projector"] = _mlp_params(
        PortableRng(seed, "init").substream("projector"),
        [arch.feature_dim, arch.projector_hidden, arch.projector_out],
    )


class Bound:
    """A bundle's parameters as Matrix leaves, ready for forward passes."""

    def __init__(self, arch: ArchSpec, leaves: dict[str, Matrix]):
        self.arch = arch
        self.leaves = leaves

    @classmethod
    def bind(cls, bundle: ModelBundle, tape: GradTape | None = None, trainable=TRAINABLE):
        if "momentum_encoder" in trainable:
            raise TapeError("the momentum encoder is never trainable")
        leaves = {}
        for key, arr in bundle.flat().items():
            comp = key.split(".", 1)[0]
            if tape is not None and comp in trainable:
                leaves[key] = tape.watch(arr, key)
            else:
                leaves[key] = Matrix(arr)
        return cls(bundle.arch, leaves)

    def detached(self) -> "Bound":
        """Same parameter values, none of them on a tape."""
        return Bound(self.arch, {k: v.detach() for k, v in self.leaves.items()})

    def _mlp(self, prefix: str, x: Matrix, n_layers: int) -> Matrix:
        for i in range(n_layers):
            x = x @ self.leaves[f"{prefix}.l{i}.weight"] + self.leaves[f"{prefix}.l{i}.bias"]
            if i < n_layers - 1:
                x = ad.relu(x)
        return x

    def encode(self, x, which: str = "main") -> Matrix:
        x = ad.as_matrix(x)
        if x.cols != self.arch.input_dim:
            raise ShapeError(f"encode: input has {x.cols} columns, arch expects {self.arch.input_dim}")
        if which == "main":
            prefix = "encoder"
        elif which == "momentum":
            prefix = "momentum_encoder"
            x = x.detach()
        else:
            raise ValueError(f"which must be 'main' or 'momentum', got {which!r}")
        return self._mlp(prefix, x, len(self.arch.encoder_hidden) + 1)

    def classify(self, z) -> Matrix:
        z = ad.as_matrix(z)
        if z.cols != self.arch.feature_dim:
            raise ShapeError(f"classify: features have {z.cols} columns, arch expects {self.arch.feature_dim}")
        return z @ self.leaves["classifier.weight"]

    def project(self, z) -> Matrix:
        z = ad.as_matrix(z)
        if z.cols != self.arch.feature_dim:
            raise ShapeError(f"project: features have {z.cols} columns, arch expects {self.arch.feature_dim}")
        return self._mlp("projector", z, 2)

    def logits(self, x, which: str = "main") -> Matrix:
        return self.classify(self.encode(x, which))


def _bound(model) -> Bound:
    return model if isinstance(model, Bound) else Bound.bind(model)


def encode(model, x, which: str = "main") -> Matrix:
    return _bound(model).encode(x, which)


def classify(model, z) -> Matrix:
    return _bound(model).classify(z)


def project(model, z) -> Matrix:
    return _bound(model).project(z)


def predict_proba(model, x) -> np.ndarray:
    return ad.softmax(_bound(model).logits(x).value)


def sgd_step(bundle: ModelBundle, grads: dict[str, np.ndarray], lr_map: dict[str, float]) -> None:
    """In-place ``theta -= lr * grad`` for every entry of ``grads``."""
    updates = []
    for key, g in grads.items():
        comp, _, name = key.partition(".")
        if comp == "momentum_encoder":
            raise TapeError(f"gradient supplied for momentum encoder parameter {key!r}")
        if comp not in bundle.params or name not in bundle.params[comp]:
            raise KeyError(f"unknown parameter {key!r}")
        if comp not in lr_map:
            raise ConfigError(f"no learning rate for component {comp!r}")
        target = bundle.params[comp][name]
        if g.shape != target.shape:
            raise ShapeError(f"gradient for {key} has shape {g.shape}, expected {target.shape}")
        updates.append((target, lr_map[comp], g))
    for target, lr, g in updates:
        target -= lr * g


def save_checkpoint(bundle: ModelBundle, path) -> None:
    """JSON: ``{arch, seed, components: {comp: {layer: {shape, values}}}}``,
    values row-major at 17 significant digits."""
    parts = []
    for comp in COMPONENTS:
        layers = []
        for name, arr in bundle.params[comp].items():
            values = ", ".join(format(v, ".17g") for v in arr.reshape(-1))
            layers.append(
                f'      {json.dumps(name)}: {{"shape": {list(arr.shape)}, "values": [{values}]}}'
            )
        parts.append(f'    {json.dumps(comp)}: {{\n' + ",\n".join(layers) + "\n    }")
    text = (
        "{\n"
        f'  "arch": {json.dumps(asdict(bundle.arch))},\n'
        f'  "seed": {int(bundle.seed)},\n'
        '  "components": {\n' + ",\n".join(parts) + "\n  }\n}\n"
    )
    Path(path).write_text(text, encoding="utf-8")


def load_checkpoint(path) -> ModelBundle:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    arch = ArchSpec(**doc["arch"]).validate()
    params = {}
    for comp in COMPONENTS:
        params[comp] = {
            name: np.array(layer["values"], dtype=np.float64).reshape(layer["shape"])
            for name, layer in doc["components"][comp].items()
        }
    return ModelBundle(arch, params, int(doc.get("seed", 0)))
