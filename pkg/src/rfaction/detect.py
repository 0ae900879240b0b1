"""Multi-proposal temporal detection over per-person and per-pair feature slots."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
import torch
from torch import nn

from .core.formats import FormatError
from .core.segments import interval_iou, pairwise_iou
from .core.types import ACTION, DEFAULT_CLASSES, INTERACTION, ActionSegment, ClassVocabulary

SINGLE, PAIR, MERGED = "single", "pair", "merged"
MAX_LOG_SCALE = math.log(4.0)


@dataclass
class CandidateSlot:
    kind: str
    participants: Tuple[int, ...]
    features: torch.Tensor  # (C, T_f)
    # merged slots: which person won the max-pool at each (channel, step)
    winners: Optional[torch.Tensor] = None

    def __post_init__(self):
        if self.kind == PAIR and (len(self.participants) != 2 or len(set(self.participants)) != 2):
            raise ValueError("pair slots need two distinct participants")


@dataclass(frozen=True)
class Proposal:
    slot: int
    start: float
    end: float
    score: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("proposal start must precede end")


@dataclass(frozen=True)
class Detection:
    segment: ActionSegment
    kind: str

    @property
    def score(self) -> float:
        return self.segment.score


def n_slots(n_persons: int) -> int:
    return n_persons + n_persons * (n_persons - 1) // 2


def nms_1d(windows: np.ndarray, scores: np.ndarray, iou_thresh: float) -> List[int]:
    """Greedy 1D NMS over ``(K, 2)`` windows; drops windows with IoU above ``iou_thresh``."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    keep: List[int] = []
    while order.size:
        i = int(order[0])
        keep.append(i)
        rest = order[1:]
        if not rest.size:
            break
        ious = pairwise_iou(windows[i:i + 1, 0], windows[i:i + 1, 1], windows[rest, 0], windows[rest, 1])[0]
        order = rest[ious <= iou_thresh]
    return keep


def crop_resize(features: torch.Tensor, windows: torch.Tensor, stride: int, length: int) -> torch.Tensor:
    """Linearly resample ``(C, T_f)`` features inside each frame window to ``length`` steps.

    Frame ``f`` sits at feature coordinate ``(f - stride / 2) / stride``.
    Returns ``(K, C, length)``.
    """
    if windows.numel() and torch.any(windows[:, 1] <= windows[:, 0]):
        raise ValueError("zero-length crop window")
    n = features.shape[1]
    u = (torch.arange(length, dtype=features.dtype) + 0.5) / length
    frames = windows[:, :1] + u * (windows[:, 1:2] - windows[:, :1])
    pos = torch.clamp((frames - stride / 2) / stride, 0, n - 1)
    i0 = pos.floor().long()
    i1 = torch.clamp(i0 + 1, max=n - 1)
    w = (pos - i0.to(features.dtype)).unsqueeze(1)
    return features[:, i0].permute(1, 0, 2) * (1 - w) + features[:, i1].permute(1, 0, 2) * w


class ProposalHead(nn.Module):
    def __init__(self, channels: int, n_anchors: int):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Conv1d(channels, channels, 5, padding=2), nn.ReLU(),
            nn.Conv1d(channels, channels, 5, padding=4, dilation=2), nn.ReLU(),
        )
        self.score = nn.Conv1d(channels, n_anchors, 1)
        self.reg = nn.Conv1d(channels, 2 * n_anchors, 1)
        nn.init.zeros_(self.reg.weight)
        nn.init.zeros_(self.reg.bias)

    def forward(self, x: torch.Tensor):
        """``(C, T_f)`` -> trunk ``(C, T_f)``, logits ``(T_f * A,)``, deltas ``(T_f * A, 2)``."""
        h = self.trunk(x.unsqueeze(0))
        logits = self.score(h)[0].transpose(0, 1).reshape(-1)
        deltas = self.reg(h)[0].transpose(0, 1).reshape(-1, 2)
        return h[0], logits, deltas


class ClassifierHead(nn.Module):
    def __init__(self, channels: int, n_classes: int, length: int = 8, hidden: int = 64):
        super().__init__()
        self.length = length
        self.body = nn.Sequential(nn.Flatten(), nn.Linear(channels * length, hidden), nn.ReLU())
        self.actionness = nn.Linear(hidden, 1)
        self.classes = nn.Linear(hidden, n_classes)
        self.offsets = nn.Linear(hidden, 2)
        nn.init.zeros_(self.offsets.weight)
        nn.init.zeros_(self.offsets.bias)

    def forward(self, crops: torch.Tensor):
        h = self.body(crops)
        return self.actionness(h)[:, 0], self.classes(h), self.offsets(h)


@dataclass
class SlotOutput:
    slot: CandidateSlot
    n_frames: int
    trunk: torch.Tensor
    anchors: torch.Tensor  # (T_f * A, 2) centre, length in frames
    logits: torch.Tensor
    deltas: torch.Tensor

    def anchor_windows(self) -> torch.Tensor:
        c, L = self.anchors[:, 0], self.anchors[:, 1]
        return torch.stack([c - L / 2, c + L / 2], -1)

    def decoded_windows(self) -> torch.Tensor:
        c = self.anchors[:, 0] + self.deltas[:, 0] * self.anchors[:, 1]
        L = self.anchors[:, 1] * torch.exp(self.deltas[:, 1].clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE))
        return torch.stack([c - L / 2, c + L / 2], -1)


@dataclass
class ClassifierOutput:
    windows: torch.Tensor      # (K, 2) proposal windows in frames (no grad)
    actionness: torch.Tensor   # (K,) logits
    class_logits: torch.Tensor  # (K, n_kind_classes)
    offsets: torch.Tensor      # (K, 2) start/end offsets relative to window length


class LinkTable:
    """Which single-person classes an interaction class overrides."""

    def __init__(self, links: Iterable[Tuple[int, int]] = (), vocab: ClassVocabulary = DEFAULT_CLASSES):
        self.links: Set[Tuple[int, int]] = {(int(a), int(b)) for a, b in links}
        self.vocab = vocab
        for inter, act in self.links:
            for cid, kind in ((inter, INTERACTION), (act, ACTION)):
                if cid not in vocab:
                    raise ValueError(f"link table references unknown class {cid}")
                if vocab[cid].kind != kind:
                    raise ValueError(f"link table expects class {cid} to be an {kind}")

    def linked(self, interaction: int, action: int) -> bool:
        return (interaction, action) in self.links

    def __eq__(self, other):
        return isinstance(other, LinkTable) and self.links == other.links

    def format(self) -> str:
        return "".join(f"{a} {b}\n" for a, b in sorted(self.links))

    @classmethod
    def parse(cls, text: str, vocab: ClassVocabulary = DEFAULT_CLASSES) -> "LinkTable":
        links = []
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) != 2:
                raise FormatError(f"expected 2 fields, got {len(toks)}", no, "record")
            try:
                links.append((int(toks[0]), int(toks[1])))
            except ValueError:
                raise FormatError(f"non-integer class id in {line!r}", no, "class_id") from None
        try:
            return cls(links, vocab)
        except ValueError as exc:
            raise FormatError(str(exc)) from None


# hand-shake overrides point: an outstretched arm during a hand-shake reads as pointing
DEFAULT_LINKS = LinkTable([(5, 3)])


def priority_resolve(
    detections: Sequence[Detection], links: LinkTable = DEFAULT_LINKS, iou_thresh: float = 0.5
) -> List[Detection]:
    """Prefer interactions over the single-person actions they explain.

    A single-person detection is removed when some interaction detection
    includes its participant, links its class in ``links`` and overlaps it in
    time with IoU of at least ``iou_thresh``. Output is sorted by score.
    """
    vocab = links.vocab
    for d in detections:
        if d.segment.class_id not in vocab:
            raise ValueError(f"detection has unknown class {d.segment.class_id}")
    inter = [d for d in detections if vocab.is_interaction(d.segment.class_id)]
    out = []
    for d in detections:
        s = d.segment
        if not vocab.is_interaction(s.class_id) and any(
            s.participants[0] in i.segment.participants
            and links.linked(i.segment.class_id, s.class_id)
            and interval_iou(s.start_frame, s.end_frame, i.segment.start_frame, i.segment.end_frame) >= iou_thresh
            for i in inter
        ):
            continue
        out.append(d)
    return sorted(out, key=_det_key)


def _det_key(d: Detection):
    s = d.segment
    return (-s.score, s.start_frame, s.end_frame, s.class_id, s.participants)


class MultiProposalDetector(nn.Module):
    """Proposal and classification heads per slot kind.

    ``mode="multi"`` builds one slot per person and one per pair; ``"single"``
    max-pools all persons into one slot over the full vocabulary.
    """

    def __init__(
        self,
        channels: int = 32,
        vocab: ClassVocabulary = DEFAULT_CLASSES,
        anchors: Sequence[int] = (16, 32, 64),
        stride: int = 2,
        mode: str = "multi",
        crop_length: int = 8,
        hidden: int = 64,
        nms_iou: float = 0.7,
        top_k: int = 20,
        actionness_thresh: float = 0.1,
        links: LinkTable = DEFAULT_LINKS,
    ):
        super().__init__()
        if mode not in ("multi", "single"):
            raise ValueError(f"unknown proposal mode {mode!r}")
        self.vocab, self.mode, self.stride = vocab, mode, stride
        self.anchor_lengths = tuple(float(a) for a in anchors)
        self.nms_iou, self.top_k, self.actionness_thresh = nms_iou, top_k, actionness_thresh
        self.links = links
        kinds = {SINGLE: vocab.ids(ACTION), PAIR: vocab.ids(INTERACTION)} if mode == "multi" else {MERGED: vocab.ids()}
        self.kind_classes: Dict[str, List[int]] = kinds
        self.proposal_heads = nn.ModuleDict({k: ProposalHead(channels, len(self.anchor_lengths)) for k in kinds})
        self.classifiers = nn.ModuleDict({k: ClassifierHead(channels, max(1, len(v)), crop_length, hidden)
                                          for k, v in kinds.items()})
        self.pair_proj = nn.Conv1d(2 * channels, channels, 1)

    def build_slots(self, person_ids: Sequence[int], features: torch.Tensor) -> List[CandidateSlot]:
        """``N`` single slots plus ``C(N, 2)`` pair slots (or one merged slot)."""
        if features.shape[0] != len(person_ids) or len(person_ids) < 1:
            raise ValueError("need one feature sequence per person and at least one person")
        order = sorted(range(len(person_ids)), key=lambda i: person_ids[i])
        ids = [int(person_ids[i]) for i in order]
        feats = features[order]
        if self.mode == "single":
            pooled, winners = feats.max(dim=0)
            return [CandidateSlot(MERGED, tuple(ids), pooled, winners)]
        slots = [CandidateSlot(SINGLE, (pid,), feats[k]) for k, pid in enumerate(ids)]
        for a, b in combinations(range(len(ids)), 2):
            fused = torch.relu(self.pair_proj(torch.cat([feats[a], feats[b]], 0).unsqueeze(0))[0])
            slots.append(CandidateSlot(PAIR, (ids[a], ids[b]), fused))
        return slots

    def anchors(self, n_steps: int, dtype=torch.float32) -> torch.Tensor:
        centres = torch.arange(n_steps, dtype=dtype) * self.stride + self.stride / 2
        lengths = torch.tensor(self.anchor_lengths, dtype=dtype)
        return torch.stack(torch.broadcast_tensors(centres[:, None], lengths[None, :]), -1).reshape(-1, 2)

    def slot_forward(self, slot: CandidateSlot, n_frames: int) -> SlotOutput:
        trunk, logits, deltas = self.proposal_heads[slot.kind](slot.features)
        return SlotOutput(slot, n_frames, trunk, self.anchors(slot.features.shape[1], trunk.dtype), logits, deltas)

    def temporal_proposals(self, out: SlotOutput, slot_index: int = 0) -> List[Proposal]:
        """Decoded anchor windows, clipped to the sequence, 1D-NMS'd and cut to top-K."""
        with torch.no_grad():
            win = out.decoded_windows().clamp(0, out.n_frames).double().cpu().numpy()
            scores = torch.sigmoid(out.logits).double().cpu().numpy()
        ok = win[:, 1] - win[:, 0] >= 1.0
        idx = np.flatnonzero(ok)
        keep = nms_1d(win[idx], scores[idx], self.nms_iou)[: self.top_k]
        return [Proposal(slot_index, float(win[idx[k], 0]), float(win[idx[k], 1]), float(scores[idx[k]]))
                for k in keep]

    def classify(self, out: SlotOutput, windows: torch.Tensor) -> ClassifierOutput:
        windows = windows.detach().to(out.trunk.dtype)
        crops = crop_resize(out.trunk, windows, self.stride, self.classifiers[out.slot.kind].length)
        act, cls, off = self.classifiers[out.slot.kind](crops)
        return ClassifierOutput(windows, act, cls, off)

    def classify_refine(self, out: SlotOutput, proposals: Sequence[Proposal],
                        actionness_thresh: Optional[float] = None) -> List[Detection]:
        """Crop, classify and refine each proposal; drop those under the actionness threshold."""
        thresh = self.actionness_thresh if actionness_thresh is None else actionness_thresh
        if not proposals:
            return []
        windows = torch.tensor([[p.start, p.end] for p in proposals], dtype=out.trunk.dtype)
        with torch.no_grad():
            res = self.classify(out, windows)
            act = torch.sigmoid(res.actionness).double().numpy()
            probs = torch.softmax(res.class_logits, -1).double().numpy()
            off = res.offsets.double().numpy()
        classes = self.kind_classes[out.slot.kind]
        dets = []
        for k, p in enumerate(proposals):
            if act[k] < thresh or not classes:
                continue
            length = p.end - p.start
            s = min(max(p.start + off[k, 0] * length, 0.0), out.n_frames)
            e = min(max(p.end + off[k, 1] * length, 0.0), out.n_frames)
            start, end = int(round(s)), int(round(e))
            if end <= start:
                start, end = int(math.floor(p.start)), max(int(math.floor(p.start)) + 1, int(math.ceil(p.end)))
                end = min(end, out.n_frames)
                start = min(start, end - 1)
            c = int(np.argmax(probs[k]))
            cid = classes[c]
            participants = self._participants(out.slot, cid, start, end)
            if participants is None:
                continue
            score = float(np.clip(act[k] * probs[k, c], 0.0, 1.0))
            kind = PAIR if len(participants) == 2 else SINGLE
            dets.append(Detection(ActionSegment(cid, start, end, participants, score), kind))
        return dets

    def _participants(self, slot: CandidateSlot, class_id: int, start: int, end: int):
        if slot.kind != MERGED:
            return slot.participants
        want = 2 if self.vocab.is_interaction(class_id) else 1
        if len(slot.participants) < want:
            return None
        lo = int(max(0, (start - self.stride / 2) // self.stride))
        hi = int(max(lo + 1, math.ceil((end - self.stride / 2) / self.stride)))
        counts = np.bincount(slot.winners[:, lo:hi].reshape(-1).cpu().numpy(), minlength=len(slot.participants))
        order = np.argsort(-counts, kind="stable")[:want]
        return tuple(slot.participants[i] for i in sorted(order))

    def detect(self, person_ids: Sequence[int], features: torch.Tensor, n_frames: int,
               resolve: bool = True, dedup_iou: float = 0.5) -> List[Detection]:
        """Full inference over one scene's person features ``(N, C, T_f)``."""
        dets: List[Detection] = []
        for i, slot in enumerate(self.build_slots(person_ids, features)):
            out = self.slot_forward(slot, n_frames)
            found = self.classify_refine(out, self.temporal_proposals(out, i))
            dets.extend(suppress_duplicates(found, dedup_iou))
        return priority_resolve(dets, self.links) if resolve else sorted(dets, key=_det_key)


def suppress_duplicates(dets: Sequence[Detection], iou_thresh: float = 0.5) -> List[Detection]:
    """Per (participants, class) NMS over refined detections."""
    groups: Dict[tuple, List[Detection]] = {}
    for d in dets:
        groups.setdefault((d.segment.participants, d.segment.class_id), []).append(d)
    out = []
    for group in groups.values():
        win = np.array([[d.segment.start_frame, d.segment.end_frame] for d in group], float)
        keep = nms_1d(win, np.array([d.score for d in group]), iou_thresh)
        out.extend(group[k] for k in keep)
    return out


def label_windows(windows: np.ndarray, gt: np.ndarray, pos_iou: float = 0.5, neg_iou: float = 0.3):
    """Label windows 1 (IoU >= pos_iou with some GT), 0 (< neg_iou with all), -1 otherwise.

    Returns ``(labels, matched_gt_index)``; the index is -1 where no GT matches.
    """
    windows = np.asarray(windows, float).reshape(-1, 2)
    gt = np.asarray(gt, float).reshape(-1, 2)
    labels = np.zeros(len(windows), dtype=int)
    match = np.full(len(windows), -1, dtype=int)
    if len(gt) == 0 or len(windows) == 0:
        return labels, match
    ious = pairwise_iou(windows[:, 0], windows[:, 1], gt[:, 0], gt[:, 1])
    best = ious.max(1)
    labels[(best >= neg_iou) & (best < pos_iou)] = -1
    pos = best >= pos_iou
    labels[pos] = 1
    match[pos] = ious.argmax(1)[pos]
    return labels, match
