from __future__ import annotations

from typing import List

import numpy as np

from .types import ActionSegment, SkeletonSequence, Track


def interval_iou(a0: float, a1: float, b0: float, b1: float) -> float:
    inter = max(0.0, min(a1, b1) - max(a0, b0))
    union = (a1 - a0) + (b1 - b0) - inter
    return inter / union if union > 0 else 0.0


def segment_iou(a: ActionSegment, b: ActionSegment) -> float:
    """Temporal IoU of two half-open frame intervals."""
    return interval_iou(a.start_frame, a.end_frame, b.start_frame, b.end_frame)


def pairwise_iou(starts_a, ends_a, starts_b, ends_b) -> np.ndarray:
    """IoU matrix between two sets of intervals, shape ``(len(a), len(b))``."""
    sa, ea = np.asarray(starts_a, float)[:, None], np.asarray(ends_a, float)[:, None]
    sb, eb = np.asarray(starts_b, float)[None, :], np.asarray(ends_b, float)[None, :]
    inter = np.clip(np.minimum(ea, eb) - np.maximum(sa, sb), 0.0, None)
    union = (ea - sa) + (eb - sb) - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def window_sequence(track: Track, T: int, stride: int) -> List[SkeletonSequence]:
    """Cut a track into fixed-length ``4 x T x N_j`` windows.

    Windows start every ``stride`` frames and stop once one reaches the end
    of the track; the last window is zero-padded on the right, padded frames
    carrying confidence 0.
    """
    if T < 1 or stride < 1:
        raise ValueError("T and stride must be >= 1")
    if len(track) < 1:
        return []
    dense = track.dense()  # (L, N_j, 4)
    length = dense.shape[0]
    out = []
    start = 0
    while True:
        chunk = dense[start:start + T]
        values = np.zeros((4, T, dense.shape[1]))
        values[:, : chunk.shape[0]] = chunk.transpose(2, 0, 1)
        out.append(SkeletonSequence(track.person_id, track.first_frame + start, values))
        if start + T >= length:
            break
        start += stride
    return out
