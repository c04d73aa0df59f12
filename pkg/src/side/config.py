"""Hyperparameters for source training and adaptation.

Loss weights, schedule and adaptation learning rates follow the method's
usual settings; source training, batch size, bank and momentum settings
are tuned for the low-dimensional synthetic benchmarks.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .cvcl import AugSpec
from .errors import ConfigError
from .network import ArchSpec
from .source import SourceConfig


@dataclass
class TrainConfig:
    tau: float = 0.1
    alpha: float = 0.3
    gamma: float = 0.1
    epsilon: float = 0.01
    n_m: int = 5
    epochs: int = 100
    batch_size: int = 32
    lr_backbone: float = 1e-3
    lr_classifier: float = 1e-2
    lr_projector: float = 1e-2
    beta: float = 1.0
    r: int = 5
    omega: float = 0.99
    seed: int = 0
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    mix_lambda: float | None = None  # fixes every mixup coefficient when set
    frozen_prototypes: bool = False
    cyclic_filtering: bool = True
    freeze_classifier: bool = False
    source_epochs: int = 200
    source_lr_backbone: float = 0.5
    source_lr_classifier: float = 0.5
    aug: AugSpec = field(default_factory=AugSpec)
    arch: ArchSpec = field(default_factory=ArchSpec)

    def validate(self) -> "TrainConfig":
        rates = {
            "lr_backbone": self.lr_backbone,
            "lr_classifier": self.lr_classifier,
            "lr_projector": self.lr_projector,
            "source_lr_backbone": self.source_lr_backbone,
            "source_lr_classifier": self.source_lr_classifier,
            "beta": self.beta,
        }
        for name, value in rates.items():
            if not value > 0:
                raise ConfigError(f"{name} must be > 0, got {value}")
        if not (0.0 <= self.tau < 1.0):
            raise ConfigError(f"tau must lie in [0, 1), got {self.tau}")
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.gamma < 0 or self.epsilon < 0:
            raise ConfigError("gamma and epsilon must be >= 0")
        if not (0.0 <= self.omega <= 1.0):
            raise ConfigError(f"omega must lie in [0, 1], got {self.omega}")
        if self.mix_lambda is not None and not (0.0 <= self.mix_lambda <= 1.0):
            raise ConfigError(f"mix_lambda must lie in [0, 1], got {self.mix_lambda}")
        for name in ("n_m", "batch_size", "r"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0 or self.source_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")
        self.aug.validate()
        self.arch.validate()
        return self

    def source_config(self) -> SourceConfig:
        return SourceConfig(
            arch=self.arch,
            epochs=self.source_epochs,
            lr_backbone=self.source_lr_backbone,
            lr_classifier=self.source_lr_classifier,
            tau=self.tau,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        data = dict(data)
        try:
            if "aug" in data:
                data["aug"] = AugSpec(**data["aug"])
            if "arch" in data:
                data["arch"] = ArchSpec(**data["arch"])
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "TrainConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)
