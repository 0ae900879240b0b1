"""Domain types shared across the package.

Skeleton data is kept as dense ``numpy`` arrays of shape ``(n_joints, 4)``
per person and frame, the last axis holding ``(x, y, z, confidence)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

N_JOINTS = 14
FPS = 30

JOINT_NAMES = (
    "head", "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
)
NECK, R_HIP, L_HIP = 1, 8, 11
TORSO_JOINTS = (NECK, R_HIP, L_HIP)

ACTION = "action"
INTERACTION = "interaction"


@dataclass(frozen=True)
class Joint:
    x: float
    y: float
    z: float
    confidence: float

    def __post_init__(self):
        if not all(np.isfinite([self.x, self.y, self.z])):
            raise ValueError("joint coordinates must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


def torso_centroid(joints: np.ndarray) -> np.ndarray:
    """Mean of neck and both hips, ``(x, y, z)``."""
    return joints[..., TORSO_JOINTS, :3].mean(axis=-2)


@dataclass(eq=False)
class SkeletonFrame:
    frame_index: int
    persons: Dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        counts = {np.shape(j)[0] for j in self.persons.values()}
        if len(counts) > 1:
            raise ValueError(f"frame {self.frame_index}: persons have different joint counts")
        self.persons = {int(k): np.asarray(v, dtype=np.float64) for k, v in self.persons.items()}

    def joints(self, person_id: int) -> List[Joint]:
        return [Joint(*map(float, row)) for row in self.persons[person_id]]

    def __eq__(self, other):
        if not isinstance(other, SkeletonFrame):
            return NotImplemented
        return (
            self.frame_index == other.frame_index
            and list(self.persons) == list(other.persons)
            and all(np.array_equal(self.persons[k], other.persons[k]) for k in self.persons)
        )


@dataclass(eq=False)
class SkeletonSequence:
    """One person's joints over ``T`` frames as a ``4 x T x N_j`` array."""

    person_id: int
    start_frame: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[0] != 4:
            raise ValueError(f"expected 4 x T x N_j values, got shape {self.values.shape}")
        if self.values.shape[1] < 1:
            raise ValueError("sequence needs at least one frame")
        conf = self.values[3]
        if np.any(conf < 0) or np.any(conf > 1):
            raise ValueError("confidence channel outside [0, 1]")

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]

    @property
    def end_frame(self) -> int:
        return self.start_frame + self.n_frames

    def __eq__(self, other):
        if not isinstance(other, SkeletonSequence):
            return NotImplemented
        return (self.person_id, self.start_frame) == (other.person_id, other.start_frame) and np.array_equal(
            self.values, other.values
        )


@dataclass(frozen=True, order=True)
class ActionSegment:
    """A labelled (or predicted) action over the half-open frame span ``[start, end)``."""

    class_id: int
    start_frame: int
    end_frame: int
    participants: Tuple[int, ...]
    score: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "participants", tuple(sorted(int(p) for p in self.participants)))
        if self.start_frame >= self.end_frame:
            raise ValueError(f"segment start {self.start_frame} must precede end {self.end_frame}")
        if len(self.participants) not in (1, 2) or len(set(self.participants)) != len(self.participants):
            raise ValueError(f"segment needs 1 or 2 distinct participants, got {self.participants}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame

    def with_score(self, score: float) -> "ActionSegment":
        return ActionSegment(self.class_id, self.start_frame, self.end_frame, self.participants, score)


@dataclass
class Track:
    """Frames associated to one person; ``idle`` counts frames since the last hit."""

    person_id: int
    frames: List[int] = field(default_factory=list)
    joints: List[np.ndarray] = field(default_factory=list)
    idle: int = 0

    def append(self, frame_index: int, joints: np.ndarray) -> None:
        if self.frames and frame_index <= self.frames[-1]:
            raise ValueError("track frames must be strictly increasing")
        self.frames.append(int(frame_index))
        self.joints.append(np.asarray(joints, dtype=np.float64))
        self.idle = 0

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def first_frame(self) -> int:
        return self.frames[0]

    @property
    def last_frame(self) -> int:
        return self.frames[-1]

    def last_centroid(self) -> np.ndarray:
        return torso_centroid(self.joints[-1])

    def dense(self) -> np.ndarray:
        """Joints over ``[first_frame, last_frame]`` as ``(T, N_j, 4)``; gaps carry confidence 0."""
        n_j = self.joints[0].shape[0]
        out = np.zeros((self.last_frame - self.first_frame + 1, n_j, 4))
        for f, j in zip(self.frames, self.joints):
            out[f - self.first_frame] = j
        return out


@dataclass(frozen=True)
class ClassInfo:
    class_id: int
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in (ACTION, INTERACTION):
            raise ValueError(f"unknown class kind {self.kind!r}")


class ClassVocabulary:
    """Ordered class table; action and interaction classes are kept apart."""

    def __init__(self, classes: Iterable[ClassInfo]):
        self.classes = sorted(classes, key=lambda c: c.class_id)
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate class ids")
        self._by_id = {c.class_id: c for c in self.classes}
        self._by_name = {c.name: c for c in self.classes}

    def __len__(self):
        return len(self.classes)

    def __contains__(self, class_id) -> bool:
        return class_id in self._by_id

    def __getitem__(self, class_id: int) -> ClassInfo:
        return self._by_id[class_id]

    def __eq__(self, other):
        return isinstance(other, ClassVocabulary) and self.classes == other.classes

    def by_name(self, name: str) -> ClassInfo:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown class name {name!r}") from None

    def ids(self, kind: str | None = None) -> List[int]:
        return [c.class_id for c in self.classes if kind is None or c.kind == kind]

    def is_interaction(self, class_id: int) -> bool:
        return self._by_id[class_id].kind == INTERACTION

    def check_segment(self, seg: ActionSegment) -> None:
        if seg.class_id not in self._by_id:
            raise ValueError(f"unknown class id {seg.class_id}")
        want = 2 if self.is_interaction(seg.class_id) else 1
        if len(seg.participants) != want:
            raise ValueError(
                f"class {self[seg.class_id].name!r} needs {want} participant(s), got {seg.participants}"
            )


DEFAULT_CLASSES = ClassVocabulary(
    [
        ClassInfo(0, "walk", ACTION),
        ClassInfo(1, "sit-down", ACTION),
        ClassInfo(2, "wave", ACTION),
        ClassInfo(3, "point", ACTION),
        ClassInfo(4, "throw", ACTION),
        ClassInfo(5, "hand-shake", INTERACTION),
    ]
)


def frames_to_array(frames: Sequence[SkeletonFrame], person_id: int) -> Tuple[np.ndarray, np.ndarray]:
    """Frame indices and stacked joints for one person across ``frames``."""
    idx, joints = [], []
    for fr in frames:
        if person_id in fr.persons:
            idx.append(fr.frame_index)
            joints.append(fr.persons[person_id])
    return np.asarray(idx, dtype=int), np.asarray(joints)
