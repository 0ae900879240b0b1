"""Plain-text skeleton, label and class-vocabulary files.

Skeleton file::

    #skeleton v1 njoints=14 fps=30
    <frame_index> <person_id> j0x j0y j0z j0c j1x ... (6 decimals)

Label file (``scores=1`` in the header adds a trailing score column)::

    #labels v1
    <class_id> <start_frame> <end_frame> <person_a> [<person_b>]

Class-vocabulary file::

    <class_id> <name> <kind>
"""
from __future__ import annotations

import math
import os
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from .types import FPS, ActionSegment, ClassInfo, ClassVocabulary, SkeletonFrame

PathLike = Union[str, os.PathLike]

SKELETON_MAGIC = "#skeleton"
LABEL_MAGIC = "#labels"


class FormatError(ValueError):
    """Malformed input file; carries the 1-based line number and offending field."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None, path=None):
        self.message, self.line, self.field, self.path = message, line, field, path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def _lines(text: str) -> Iterable[Tuple[int, str]]:
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line:
            yield no, line


def _parse_header(line: str, magic: str, lineno: int) -> dict:
    parts = line.split()
    if parts[0] != magic:
        raise FormatError(f"expected header starting with {magic!r}", lineno, "header")
    if len(parts) < 2 or parts[1] != "v1":
        raise FormatError("unsupported version", lineno, "version")
    opts = {}
    for tok in parts[2:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise FormatError(f"bad header token {tok!r}", lineno, "header")
        opts[key] = val
    return opts


def _int(tok: str, lineno: int, field: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise FormatError(f"expected integer, got {tok!r}", lineno, field) from None


def _float(tok: str, lineno: int, field: str) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise FormatError(f"expected number, got {tok!r}", lineno, field) from None
    if not math.isfinite(val):
        raise FormatError(f"non-finite value {tok!r}", lineno, field)
    return val


_JOINT_FIELDS = "xyzc"


def format_skeleton(frames: Sequence[SkeletonFrame], n_joints: int = 14, fps: int = FPS) -> str:
    out = [f"{SKELETON_MAGIC} v1 njoints={n_joints} fps={fps}"]
    for fr in frames:
        for pid, joints in fr.persons.items():
            if joints.shape != (n_joints, 4):
                raise ValueError(f"frame {fr.frame_index} person {pid}: joints shape {joints.shape}")
            vals = " ".join(f"{v:.6f}" for v in joints.reshape(-1))
            out.append(f"{fr.frame_index} {pid} {vals}")
    return "\n".join(out) + "\n"


def parse_skeleton(text: str) -> Tuple[List[SkeletonFrame], dict]:
    """Parse skeleton text into frames plus header options (``njoints``, ``fps``)."""
    lines = list(_lines(text))
    if not lines:
        return [], {"njoints": 14, "fps": FPS}
    head_no, head = lines[0]
    opts = _parse_header(head, SKELETON_MAGIC, head_no)
    n_joints = _int(opts.get("njoints", "14"), head_no, "njoints")
    fps = _int(opts.get("fps", str(FPS)), head_no, "fps")
    frames: List[SkeletonFrame] = []
    for no, line in lines[1:]:
        if line.startswith("#"):
            continue
        toks = line.split()
        if len(toks) != 2 + 4 * n_joints:
            raise FormatError(f"expected {2 + 4 * n_joints} fields, got {len(toks)}", no, "record")
        fidx = _int(toks[0], no, "frame_index")
        pid = _int(toks[1], no, "person_id")
        if fidx < 0:
            raise FormatError("negative frame index", no, "frame_index")
        vals = np.empty(4 * n_joints)
        for k, tok in enumerate(toks[2:]):
            name = f"j{k // 4}{_JOINT_FIELDS[k % 4]}"
            vals[k] = _float(tok, no, name)
            if k % 4 == 3 and not 0.0 <= vals[k] <= 1.0:
                raise FormatError(f"confidence {tok} outside [0, 1]", no, name)
        if frames and frames[-1].frame_index == fidx:
            if pid in frames[-1].persons:
                raise FormatError(f"duplicate person {pid} in frame {fidx}", no, "person_id")
            frames[-1].persons[pid] = vals.reshape(n_joints, 4)
        else:
            if frames and fidx < frames[-1].frame_index:
                raise FormatError("frame indices must be non-decreasing", no, "frame_index")
            frames.append(SkeletonFrame(fidx, {pid: vals.reshape(n_joints, 4)}))
    return frames, {"njoints": n_joints, "fps": fps}


def format_labels(segments: Sequence[ActionSegment], scores: bool = False) -> str:
    out = [f"{LABEL_MAGIC} v1" + (" scores=1" if scores else "")]
    for s in segments:
        parts = [s.class_id, s.start_frame, s.end_frame, *s.participants]
        line = " ".join(str(p) for p in parts)
        if scores:
            line += f" {s.score:.6f}"
        out.append(line)
    return "\n".join(out) + "\n"


def parse_labels(text: str, vocab: ClassVocabulary | None = None) -> List[ActionSegment]:
    lines = list(_lines(text))
    if not lines:
        return []
    head_no, head = lines[0]
    opts = _parse_header(head, LABEL_MAGIC, head_no)
    scored = opts.get("scores", "0") == "1"
    segs = []
    for no, line in lines[1:]:
        if line.startswith("#"):
            continue
        toks = line.split()
        score = 1.0
        if scored:
            if len(toks) < 2:
                raise FormatError("missing score column", no, "score")
            score = _float(toks.pop(), no, "score")
            if not 0.0 <= score <= 1.0:
                raise FormatError(f"score {score} outside [0, 1]", no, "score")
        if len(toks) not in (4, 5):
            raise FormatError(f"expected 4 or 5 fields, got {len(toks)}", no, "record")
        cls = _int(toks[0], no, "class_id")
        start = _int(toks[1], no, "start_frame")
        end = _int(toks[2], no, "end_frame")
        people = [_int(t, no, name) for t, name in zip(toks[3:], ("person_a", "person_b"))]
        if start < 0:
            raise FormatError("negative start frame", no, "start_frame")
        if end <= start:
            raise FormatError("end_frame must exceed start_frame", no, "end_frame")
        if len(people) == 2 and people[0] == people[1]:
            raise FormatError("participants must be distinct", no, "person_b")
        seg = ActionSegment(cls, start, end, tuple(people), score)
        if vocab is not None:
            try:
                vocab.check_segment(seg)
            except ValueError as exc:
                raise FormatError(str(exc), no, "class_id") from None
        segs.append(seg)
    return segs


def format_vocabulary(vocab: ClassVocabulary) -> str:
    return "".join(f"{c.class_id} {c.name} {c.kind}\n" for c in vocab.classes)


def parse_vocabulary(text: str) -> ClassVocabulary:
    classes = []
    for no, line in _lines(text):
        if line.startswith("#"):
            continue
        toks = line.split()
        if len(toks) != 3:
            raise FormatError(f"expected 3 fields, got {len(toks)}", no, "record")
        try:
            classes.append(ClassInfo(_int(toks[0], no, "class_id"), toks[1], toks[2]))
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(str(exc), no, "kind") from None
    try:
        return ClassVocabulary(classes)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def _read(path: PathLike) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path: PathLike, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def read_skeleton_file(path: PathLike) -> List[SkeletonFrame]:
    try:
        return parse_skeleton(_read(path))[0]
    except FormatError as exc:
        raise FormatError(exc.message, exc.line, exc.field, path) from None


def write_skeleton_file(path: PathLike, frames: Sequence[SkeletonFrame], n_joints: int = 14) -> None:
    _write(path, format_skeleton(frames, n_joints))


def read_label_file(path: PathLike, vocab: ClassVocabulary | None = None) -> List[ActionSegment]:
    try:
        return parse_labels(_read(path), vocab)
    except FormatError as exc:
        raise FormatError(exc.message, exc.line, exc.field, path) from None


def write_label_file(path: PathLike, segments: Sequence[ActionSegment], scores: bool = False) -> None:
    _write(path, format_labels(segments, scores))


def read_vocabulary_file(path: PathLike) -> ClassVocabulary:
    return parse_vocabulary(_read(path))


def write_vocabulary_file(path: PathLike, vocab: ClassVocabulary) -> None:
    _write(path, format_vocabulary(vocab))
