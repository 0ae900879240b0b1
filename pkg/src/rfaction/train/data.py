"""Training batches drawn from simulated scenes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.types import JOINT_NAMES, N_JOINTS, TORSO_JOINTS, ActionSegment, SkeletonFrame
from ..simkit import GridSpec, HeatmapStream, SimulatedScene

RF, SKELETON = "rf", "skeleton"
MIN_VISIBLE = 8


@dataclass
class TrainBatch:
    modality: str
    person_ids: List[int]
    joints: np.ndarray  # (N, T, N_j, 4) ground truth, metres + confidence
    segments: List[ActionSegment]  # frames relative to the clip start
    heatmaps: Optional[HeatmapStream] = None

    def __post_init__(self):
        if self.modality not in (RF, SKELETON):
            raise ValueError(f"unknown modality {self.modality!r}")
        if (self.modality == RF) != (self.heatmaps is not None):
            raise ValueError("rf batches carry heatmaps and skeleton batches do not")
        if self.joints.ndim != 4 or self.joints.shape[0] != len(self.person_ids):
            raise ValueError("joints must be (N, T, N_j, 4) with one row per person id")
        if self.heatmaps is not None and len(self.heatmaps) != self.joints.shape[1]:
            raise ValueError("heatmap and skeleton clip lengths differ")

    @property
    def n_frames(self) -> int:
        return self.joints.shape[1]

    def sequences(self) -> np.ndarray:
        """``(N, 4, T, N_j)`` skeleton sequences."""
        return np.ascontiguousarray(self.joints.transpose(0, 3, 1, 2))


def scene_joints(frames: Sequence[SkeletonFrame]) -> Tuple[List[int], np.ndarray]:
    """Person ids and dense ``(N, T, N_j, 4)`` joints; absent frames have confidence 0."""
    ids = sorted({pid for fr in frames for pid in fr.persons})
    if not frames:
        return ids, np.zeros((0, 0, 0, 4))
    n_j = next((p.shape[0] for fr in frames for p in fr.persons.values()), N_JOINTS)
    t0 = frames[0].frame_index
    T = frames[-1].frame_index - t0 + 1
    out = np.zeros((len(ids), T, n_j, 4))
    for fr in frames:
        for k, pid in enumerate(ids):
            if pid in fr.persons:
                out[k, fr.frame_index - t0] = fr.persons[pid]
    return ids, out


def clip_segments(segments: Sequence[ActionSegment], start: int, length: int,
                  min_visible: int = MIN_VISIBLE) -> List[ActionSegment]:
    """Segments overlapping ``[start, start + length)``, cut to it and shifted to clip frames."""
    out = []
    for s in segments:
        a, b = max(s.start_frame, start), min(s.end_frame, start + length)
        if b - a >= min(min_visible, s.length):
            out.append(ActionSegment(s.class_id, a - start, b - start, s.participants, s.score))
    return out


def rotate_scene(joints: np.ndarray, angle: float) -> np.ndarray:
    """Rotate all persons about the vertical axis through their mean torso position."""
    valid = joints[..., 3] > 0
    torso = joints[:, :, list(TORSO_JOINTS), :2][valid[:, :, list(TORSO_JOINTS)]]
    centre = torso.mean(0) if len(torso) else np.zeros(2)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    out = joints.copy()
    out[..., :2] = (joints[..., :2] - centre) @ rot.T + centre
    out[~valid] = 0.0
    return out


def _mirror_index() -> List[int]:
    swap = {"r_": "l_", "l_": "r_"}
    return [JOINT_NAMES.index(swap.get(n[:2], n[:2]) + n[2:]) for n in JOINT_NAMES]


MIRROR = _mirror_index()


def mirror_batch(batch: TrainBatch, flip_x: bool, flip_y: bool, grid: GridSpec = GridSpec()) -> TrainBatch:
    """Reflect an rf batch across the room's centre lines.

    Heatmaps and joints are flipped together and left/right joints swap
    names, so the result is a scene a mirrored body would produce.
    """
    if not (flip_x or flip_y):
        return batch
    h, v = batch.heatmaps.horizontal, batch.heatmaps.vertical
    joints = batch.joints.copy()
    valid = joints[..., 3] > 0
    if flip_x:
        h, v = h[:, ::-1], v[:, ::-1]
        joints[..., 0] = h.shape[1] * grid.cell[0] - joints[..., 0]
    if flip_y:
        h = h[:, :, ::-1]
        joints[..., 1] = h.shape[2] * grid.cell[1] - joints[..., 1]
    joints[~valid] = 0.0
    if flip_x != flip_y:
        joints = joints[:, :, MIRROR]
    return TrainBatch(RF, batch.person_ids, joints, batch.segments,
                      HeatmapStream(np.ascontiguousarray(h), np.ascontiguousarray(v)))


def rf_batch(scene: SimulatedScene, rng: np.random.Generator, n_frames: int) -> TrainBatch:
    ids, joints = scene_joints(scene.frames)
    T = len(scene)
    n_frames = min(n_frames, T)
    start = int(rng.integers(0, T - n_frames + 1))
    return TrainBatch(
        RF, ids, joints[:, start:start + n_frames], clip_segments(scene.segments, start, n_frames),
        scene.heatmaps[start:start + n_frames],
    )


def skeleton_batch(scene: SimulatedScene, rng: np.random.Generator, n_frames: int = 0,
                   rotate: bool = True) -> TrainBatch:
    ids, joints = scene_joints(scene.frames)
    T = joints.shape[1]
    n_frames = T if n_frames <= 0 else min(n_frames, T)
    start = int(rng.integers(0, T - n_frames + 1))
    clip = joints[:, start:start + n_frames]
    if rotate:
        clip = rotate_scene(clip, float(rng.uniform(-np.pi, np.pi)))
    return TrainBatch(SKELETON, ids, clip, clip_segments(scene.segments, start, n_frames))


def alternate_schedule(ratio: int, n_steps: int, skeleton_available: bool = True) -> List[str]:
    """``ratio`` rf batches then one skeleton batch, repeating; rf only without skeleton data."""
    if ratio < 1:
        raise ValueError("ratio must be at least 1")
    if not skeleton_available:
        return [RF] * n_steps
    return [SKELETON if k % (ratio + 1) == ratio else RF for k in range(n_steps)]
