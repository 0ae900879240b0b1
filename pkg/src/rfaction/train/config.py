from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import List

import yaml

from ..model import ModelConfig

MODES = ("end_to_end", "separate")


@dataclass
class TrainConfig:
    seed: int = 0
    steps: int = 2000
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    grad_clip: float = 5.0
    lam: float = 1.0
    ratio: int = 1
    mode: str = "end_to_end"
    clip_windows: int = 3
    skeleton_clip: int = 0  # 0: whole scene
    box_jitter: float = 1.0
    mirror: bool = True
    n_persons: int = 2
    duration: int = 240
    train_seeds: List[int] = field(default_factory=lambda: list(range(1000, 1020)))
    skeleton_seeds: List[int] = field(default_factory=list)  # empty: reuse train_seeds
    val_seeds: List[int] = field(default_factory=list)
    checkpoint_every: int = 500
    log_every: int = 50
    eval_every: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.ratio < 1:
            raise ValueError("ratio must be at least 1")
        if self.clip_windows < 1 or self.steps < 0:
            raise ValueError("clip_windows must be positive and steps nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown training config keys: {sorted(extra)}")
        kw = dict(d)
        if "model" in kw:
            m = kw["model"]
            kw["model"] = m if isinstance(m, ModelConfig) else ModelConfig.from_dict(m or {})
        for k in ("train_seeds", "skeleton_seeds", "val_seeds"):
            if k in kw:
                kw[k] = [int(s) for s in kw[k]]
        return cls(**kw)


def load_train_config(path) -> TrainConfig:
    with open(path) as fh:
        return TrainConfig.from_dict(yaml.safe_load(fh) or {})


def save_train_config(path, cfg: TrainConfig) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
