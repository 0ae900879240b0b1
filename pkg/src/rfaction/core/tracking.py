"""Greedy nearest-neighbour association of per-frame skeletons into tracks."""
from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from .types import SkeletonFrame, Track, torso_centroid


def greedy_pairs(dist: np.ndarray, gate: float = np.inf) -> List[Tuple[int, int]]:
    """Row/column pairs accepted in ascending distance (ties by row, then column),
    each index used at most once and only when within ``gate``."""
    dist = np.asarray(dist, float)
    if dist.size == 0:
        return []
    rows, cols = np.nonzero(dist <= gate)
    order = np.lexsort((cols, rows, dist[rows, cols]))
    used_r, used_c, out = set(), set(), []
    for k in order:
        r, c = int(rows[k]), int(cols[k])
        if r not in used_r and c not in used_c:
            used_r.add(r)
            used_c.add(c)
            out.append((r, c))
    return out


def associate_frames(frames: Sequence[SkeletonFrame], gate_dist: float = 0.5, max_gap: int = 15) -> List[Track]:
    """Link skeleton detections across frames.

    Candidate (track, detection) pairs within ``gate_dist`` metres of the
    track's last torso centroid are accepted in ascending distance order; a
    detection that finds no open track starts a new one. A track that has not
    been hit for more than ``max_gap`` frames is closed.

    Returns every track (open or closed) ordered by creation; track ids count
    up from 1.
    """
    if gate_dist <= 0:
        raise ValueError("gate_dist must be positive")
    tracks: List[Track] = []
    open_tracks: List[Track] = []
    prev_index = None
    for frame in frames:
        if prev_index is not None and frame.frame_index <= prev_index:
            raise ValueError("frames must be ordered by strictly increasing frame_index")
        prev_index = frame.frame_index

        open_tracks = [t for t in open_tracks if frame.frame_index - t.last_frame <= max_gap + 1]
        for t in open_tracks:
            t.idle = frame.frame_index - t.last_frame - 1

        det_ids = list(frame.persons)
        if not det_ids:
            continue
        det_centroids = np.array([torso_centroid(frame.persons[d]) for d in det_ids])
        used_d = set()
        if open_tracks:
            last = np.array([t.last_centroid() for t in open_tracks])
            dist = np.linalg.norm(last[:, None] - det_centroids[None], axis=-1)
            for ti, di in greedy_pairs(dist, gate_dist):
                used_d.add(di)
                open_tracks[ti].append(frame.frame_index, frame.persons[det_ids[di]])
        for di, d in enumerate(det_ids):
            if di not in used_d:
                t = Track(person_id=len(tracks) + 1)
                t.append(frame.frame_index, frame.persons[d])
                tracks.append(t)
                open_tracks.append(t)
    return tracks


def tracks_to_frames(tracks: Sequence[Track]) -> List[SkeletonFrame]:
    """Inverse view of :func:`associate_frames`: frames keyed by track id."""
    by_frame: dict = {}
    for t in tracks:
        for f, j in zip(t.frames, t.joints):
            by_frame.setdefault(f, {})[t.person_id] = j
    return [SkeletonFrame(f, dict(sorted(p.items()))) for f, p in sorted(by_frame.items())]


def frames_to_tracks(frames: Sequence[SkeletonFrame]) -> List[Track]:
    """Group frames by their existing person ids (no association)."""
    tracks: dict = {}
    for fr in frames:
        for pid, j in fr.persons.items():
            tracks.setdefault(pid, Track(person_id=pid)).append(fr.frame_index, j)
    return [tracks[k] for k in sorted(tracks)]
