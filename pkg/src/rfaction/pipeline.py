"""Heatmaps in, tracked skeletons and action detections out."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import torch

from .core.tracking import associate_frames, tracks_to_frames
from .core.types import ActionSegment, SkeletonFrame, Track
from .detect import Detection
from .eval import EvalReport, align_identities, mean_joint_error, mean_map, relabel
from .model import RFActionModel
from .simkit.render import HeatmapStream


@dataclass
class PipelineResult:
    frames: List[SkeletonFrame]  # keyed by track id
    tracks: List[Track]
    detections: List[Detection]

    @property
    def segments(self) -> List[ActionSegment]:
        return [d.segment for d in self.detections]


def dense_sequences(tracks: Sequence[Track], n_frames: int) -> np.ndarray:
    """``(N, 4, T, N_j)`` sequences over the whole stream, confidence 0 where a track is absent."""
    n_j = tracks[0].joints[0].shape[0]
    out = np.zeros((len(tracks), n_frames, n_j, 4))
    for k, t in enumerate(tracks):
        for f, j in zip(t.frames, t.joints):
            if 0 <= f < n_frames:
                out[k, f] = j
    return out.transpose(0, 3, 1, 2)


@torch.no_grad()
def run_pipeline(model: RFActionModel, stream: HeatmapStream) -> PipelineResult:
    cfg = model.cfg
    model.eval()
    frames = model.skeleton_generator.infer(stream, cfg.rpn_score_thresh, cfg.rpn_nms_iou, cfg.max_proposals)
    tracks = [t for t in associate_frames(frames, cfg.gate_dist, cfg.max_gap) if len(t) >= cfg.min_track]
    if not tracks:
        return PipelineResult([], [], [])
    dtype = next(model.parameters()).dtype
    seqs = torch.as_tensor(dense_sequences(tracks, len(stream)), dtype=dtype)
    dets = model.action_recognizer.detect([t.person_id for t in tracks], seqs)
    return PipelineResult(tracks_to_frames(tracks), tracks, dets)


SCENE_ID_STRIDE = 100_000


def _shift(seg: ActionSegment, offset: int) -> ActionSegment:
    return ActionSegment(seg.class_id, seg.start_frame, seg.end_frame,
                         tuple(p + offset for p in seg.participants), seg.score)


def pool_scenes(per_scene: Sequence[Sequence[ActionSegment]]) -> List[ActionSegment]:
    """Concatenate per-scene segments with person ids offset so scenes never share a person."""
    return [_shift(s, k * SCENE_ID_STRIDE) for k, segs in enumerate(per_scene) for s in segs]


def evaluate_scenes(model: RFActionModel, scenes: Sequence, thetas: Sequence[float] = (0.1, 0.5)) -> EvalReport:
    """Run the pipeline on each scene and pool detections into one report.

    Predicted track ids are aligned to ground-truth ids per scene; ids are
    then offset per scene so that persons of different scenes never match.
    """
    preds, errors = [], []
    for scene in scenes:
        res = run_pipeline(model, scene.heatmaps)
        preds.append(relabel(res.segments, align_identities(res.frames, scene.frames)))
        if res.frames:
            errors.append(mean_joint_error(res.frames, scene.frames))
    err = float(np.nanmean(errors)) if errors else float("nan")
    return mean_map(pool_scenes(preds), pool_scenes([s.segments for s in scenes]), thetas, model.cfg.vocab, err)
