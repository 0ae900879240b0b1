"""Temporal detection mAP and skeleton joint error."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .core.segments import interval_iou
from .core.tracking import greedy_pairs, tracks_to_frames
from .core.types import ActionSegment, ClassVocabulary, SkeletonFrame, Track, torso_centroid


def _rank(preds: Sequence[ActionSegment]) -> List[ActionSegment]:
    # descending score, ties by earlier start; sorted() is stable for full ties
    return sorted(preds, key=lambda s: (-s.score, s.start_frame))


def match_predictions(preds: Sequence[ActionSegment], gts: Sequence[ActionSegment], theta: float) -> List[Optional[int]]:
    """Greedy matching in rank order; entry k is the GT index hit by ranked prediction k, or None.

    A prediction may only take an unmatched GT of the same class and
    participant set with IoU >= ``theta``; among those it takes the highest
    IoU, ties to the lower GT index.
    """
    used = set()
    out: List[Optional[int]] = []
    for p in _rank(preds):
        best, best_iou = None, -1.0
        for j, g in enumerate(gts):
            if j in used or g.class_id != p.class_id or g.participants != p.participants:
                continue
            iou = interval_iou(p.start_frame, p.end_frame, g.start_frame, g.end_frame)
            if iou >= theta and iou > best_iou:
                best, best_iou = j, iou
        if best is not None:
            used.add(best)
        out.append(best)
    return out


def ap_from_hits(hits: Sequence[bool], n_gt: int) -> float:
    """Area under the all-point interpolated precision-recall curve."""
    if n_gt == 0:
        return float("nan")
    tp = np.cumsum(np.asarray(hits, dtype=float))
    if tp.size == 0:
        return 0.0
    precision = tp / np.arange(1, len(tp) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(envelope[np.asarray(hits, bool)].sum() / n_gt)


def average_precision(preds: Sequence[ActionSegment], gts: Sequence[ActionSegment], theta: float,
                      class_id: int) -> float:
    """AP of one class at temporal IoU ``theta``; NaN when the class has no ground truth."""
    p = [s for s in preds if s.class_id == class_id]
    g = [s for s in gts if s.class_id == class_id]
    hits = [m is not None for m in match_predictions(p, g, theta)]
    return ap_from_hits(hits, len(g))


@dataclass
class EvalReport:
    thetas: List[float]
    per_class: Dict[float, Dict[int, float]]
    map: Dict[float, float]
    n_gt: int
    n_pred: int
    joint_error_cm: Optional[float] = None
    class_names: Dict[int, str] = field(default_factory=dict)

    def _name(self, cid: int) -> str:
        return self.class_names.get(cid, str(cid))

    def lines(self) -> List[str]:
        out = [f"n_gt {self.n_gt}", f"n_pred {self.n_pred}"]
        for t in self.thetas:
            out.append(f"mAP@{t:g} {self.map[t]:.6f}")
        for t in self.thetas:
            for cid, ap in sorted(self.per_class[t].items()):
                out.append(f"AP@{t:g}/{self._name(cid)} {ap:.6f}")
        if self.joint_error_cm is not None:
            out.append(f"joint_error_cm {self.joint_error_cm:.6f}")
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def to_table(self) -> str:
        rows = ["theta\tclass_id\tclass\tap"]
        for t in self.thetas:
            for cid, ap in sorted(self.per_class[t].items()):
                rows.append(f"{t:g}\t{cid}\t{self._name(cid)}\t{ap:.6f}")
            rows.append(f"{t:g}\t-1\tmAP\t{self.map[t]:.6f}")
        return "\n".join(rows) + "\n"


def mean_map(preds: Sequence[ActionSegment], gts: Sequence[ActionSegment], thetas: Sequence[float] = (0.1, 0.5),
             vocab: Optional[ClassVocabulary] = None, joint_error_cm: Optional[float] = None) -> EvalReport:
    """Per-class AP and their unweighted mean over the classes present in ``gts``."""
    classes = sorted({g.class_id for g in gts})
    per_class: Dict[float, Dict[int, float]] = {}
    maps: Dict[float, float] = {}
    for t in thetas:
        t = float(t)
        per_class[t] = {c: average_precision(preds, gts, t, c) for c in classes}
        maps[t] = float(np.mean(list(per_class[t].values()))) if classes else float("nan")
    names = {c.class_id: c.name for c in vocab.classes} if vocab is not None else {}
    return EvalReport([float(t) for t in thetas], per_class, maps, len(gts), len(preds), joint_error_cm, names)


FramesOrTracks = Union[Sequence[SkeletonFrame], Sequence[Track]]


def _as_frames(x: FramesOrTracks) -> List[SkeletonFrame]:
    x = list(x)
    if x and isinstance(x[0], Track):
        return tracks_to_frames(x)
    return x


def mean_joint_error(pred: FramesOrTracks, gt: FramesOrTracks) -> float:
    """Mean Euclidean joint distance in centimetres over persons matched per frame.

    Persons are paired per frame by greedy torso-centroid distance. NaN
    when no person could be matched.
    """
    gt_by_frame = {f.frame_index: f for f in _as_frames(gt)}
    total, count = 0.0, 0
    for pf in _as_frames(pred):
        gf = gt_by_frame.get(pf.frame_index)
        if gf is None or not pf.persons or not gf.persons:
            continue
        P = [pf.persons[k] for k in sorted(pf.persons)]
        G = [gf.persons[k] for k in sorted(gf.persons)]
        pc = np.array([torso_centroid(j) for j in P])
        gc = np.array([torso_centroid(j) for j in G])
        for i, j in greedy_pairs(np.linalg.norm(pc[:, None] - gc[None], axis=-1)):
            d = np.linalg.norm(P[i][:, :3] - G[j][:, :3], axis=-1)
            total += float(d.sum())
            count += d.size
    return 100.0 * total / count if count else float("nan")


def align_identities(pred: FramesOrTracks, gt: FramesOrTracks) -> Dict[int, int]:
    """Map predicted person ids onto ground-truth ids by mean torso distance.

    The distance between a predicted and a GT person is their centroid
    distance averaged over the frames where both appear. Pairs are taken
    greedily in ascending distance; predicted ids left over map to fresh ids
    above every GT id so they can never match.
    """
    pf, gf = _as_frames(pred), {f.frame_index: f for f in _as_frames(gt)}
    p_ids = sorted({k for f in pf for k in f.persons})
    g_ids = sorted({k for f in gf.values() for k in f.persons})
    sums = np.zeros((len(p_ids), len(g_ids)))
    counts = np.zeros_like(sums)
    for f in pf:
        g = gf.get(f.frame_index)
        if g is None:
            continue
        for a, pid in enumerate(p_ids):
            if pid not in f.persons:
                continue
            c = torso_centroid(f.persons[pid])
            for b, gid in enumerate(g_ids):
                if gid in g.persons:
                    sums[a, b] += np.linalg.norm(c - torso_centroid(g.persons[gid]))
                    counts[a, b] += 1
    dist = np.where(counts > 0, sums / np.maximum(counts, 1), np.inf)
    mapping = {p_ids[a]: g_ids[b] for a, b in greedy_pairs(dist, gate=math.inf) if np.isfinite(dist[a, b])}
    fresh = max(g_ids, default=0) + 1
    for pid in p_ids:
        if pid not in mapping:
            mapping[pid] = fresh
            fresh += 1
    return mapping


def relabel(segments: Sequence[ActionSegment], mapping: Dict[int, int]) -> List[ActionSegment]:
    return [ActionSegment(s.class_id, s.start_frame, s.end_frame,
                          tuple(sorted(mapping.get(p, p) for p in s.participants)), s.score) for s in segments]
