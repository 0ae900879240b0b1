"""Model configuration and the two-partition end-to-end network."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import List, Sequence, Tuple

import torch
from torch import nn

from .actionfeat import AttentionFeatureNet
from .core.types import ClassInfo, ClassVocabulary, DEFAULT_CLASSES, TORSO_JOINTS
from .detect import LinkTable, MultiProposalDetector
from .simkit.render import GridSpec
from .skelgen.network import SkeletonGenerator

SKELETON_GENERATOR = "skeleton_generator"
ACTION_RECOGNIZER = "action_recognizer"
PARTITIONS = (SKELETON_GENERATOR, ACTION_RECOGNIZER)


@dataclass
class ModelConfig:
    room: Tuple[float, float, float] = (6.4, 6.4, 3.2)
    horizontal: Tuple[int, int] = (64, 64)
    vertical: Tuple[int, int] = (64, 32)
    window: int = 30
    generator_widths: Tuple[int, ...] = (8, 16, 32, 32)
    n_joints: int = 14
    crop: int = 16
    depth_bins: int = 16
    pose_hidden: int = 16
    anchor_size: Tuple[float, float] = (10.0, 10.0)
    temperature: float = 1.0
    action_widths: Tuple[int, int] = (16, 32)
    heads: int = 4
    attention: bool = True
    positional: bool = False
    proposals: str = "multi"
    anchors: Tuple[int, ...] = (16, 32, 64)
    crop_length: int = 8
    classifier_hidden: int = 64
    nms_iou: float = 0.7
    top_k: int = 20
    actionness_thresh: float = 0.1
    links: List[Tuple[int, int]] = field(default_factory=lambda: [(5, 3)])
    classes: List[Tuple[int, str, str]] = field(
        default_factory=lambda: [(c.class_id, c.name, c.kind) for c in DEFAULT_CLASSES.classes]
    )
    # inference
    rpn_score_thresh: float = 0.5
    rpn_nms_iou: float = 0.3
    max_proposals: int = 8
    gate_dist: float = 0.5
    max_gap: int = 15
    min_track: int = 10

    @property
    def grid(self) -> GridSpec:
        return GridSpec(tuple(self.room), tuple(self.horizontal), tuple(self.vertical))

    @property
    def vocab(self) -> ClassVocabulary:
        return ClassVocabulary(ClassInfo(int(i), n, k) for i, n, k in self.classes)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown model config keys: {sorted(extra)}")
        kw = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            if f.name in ("links", "classes"):
                v = [tuple(x) for x in v]
            elif isinstance(v, list):
                v = tuple(v)
            kw[f.name] = v
        return cls(**kw)


def center_scene(seqs: torch.Tensor) -> torch.Tensor:
    """Subtract the scene's mean torso position (x, y) from all persons.

    ``seqs`` is ``(N, 4, T, N_j)``; frames with zero confidence are left at
    zero. Relative positions between persons are preserved. The confidence
    channel becomes a 0/1 presence flag, so ground-truth skeletons and
    predicted ones look alike to the recognizer.
    """
    valid = (seqs[:, 3:4] > 0).to(seqs.dtype)
    torso = seqs[:, :2, :, list(TORSO_JOINTS)]
    w = valid[:, :, :, list(TORSO_JOINTS)]
    centre = (torso * w).sum(dim=(0, 2, 3)) / w.sum().clamp(min=1.0)
    shifted = seqs[:, :2] - centre.reshape(1, 2, 1, 1)
    return torch.cat([shifted * valid, seqs[:, 2:3] * valid, valid], dim=1)


class ActionRecognizer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.features = AttentionFeatureNet(cfg.n_joints, cfg.action_widths, cfg.heads, cfg.attention, cfg.positional)
        vocab = cfg.vocab
        self.detector = MultiProposalDetector(
            self.features.out_channels, vocab, cfg.anchors, 2, cfg.proposals, cfg.crop_length,
            cfg.classifier_hidden, cfg.nms_iou, cfg.top_k, cfg.actionness_thresh, LinkTable(cfg.links, vocab),
        )

    def person_features(self, seqs: torch.Tensor) -> torch.Tensor:
        return self.features(center_scene(seqs))

    @torch.no_grad()
    def detect(self, person_ids: Sequence[int], seqs: torch.Tensor, resolve: bool = True):
        return self.detector.detect(person_ids, self.person_features(seqs), seqs.shape[2], resolve)


class RFActionModel(nn.Module):
    """Skeleton generator and action recognizer as the two trainable partitions."""

    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        self.skeleton_generator = SkeletonGenerator(
            cfg.grid, cfg.window, cfg.generator_widths, cfg.n_joints, cfg.crop, cfg.depth_bins,
            cfg.pose_hidden, cfg.anchor_size, cfg.temperature,
        )
        self.action_recognizer = ActionRecognizer(cfg)

    def partition(self, name: str) -> List[Tuple[str, nn.Parameter]]:
        if name not in PARTITIONS:
            raise KeyError(name)
        return [(n, p) for n, p in self.named_parameters() if n.split(".", 1)[0] == name]
