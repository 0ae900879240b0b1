"""Parametric skeleton motion for the six built-in classes.

Poses are written in a body frame (forward, left, up) and then rotated by the
person's heading and translated to the root position on the floor.
"""
from __future__ import annotations

import math
from typing import Dict, List, Tuple

import numpy as np

from ..core.types import DEFAULT_CLASSES, FPS, ActionSegment, SkeletonFrame
from .scenario import Scenario

# body frame (forward, left, up) in metres for a ~1.65 m person
REST = np.array([
    [0.00, 0.00, 1.62],   # head
    [0.00, 0.00, 1.45],   # neck
    [0.00, -0.19, 1.42],  # r_shoulder
    [0.00, -0.22, 1.14],  # r_elbow
    [0.02, -0.22, 0.88],  # r_wrist
    [0.00, 0.19, 1.42],   # l_shoulder
    [0.00, 0.22, 1.14],   # l_elbow
    [0.02, 0.22, 0.88],   # l_wrist
    [0.00, -0.10, 0.95],  # r_hip
    [0.02, -0.10, 0.52],  # r_knee
    [0.00, -0.10, 0.08],  # r_ankle
    [0.00, 0.10, 0.95],   # l_hip
    [0.02, 0.10, 0.52],   # l_knee
    [0.00, 0.10, 0.08],   # l_ankle
])

SEATED = np.array([
    [-0.10, 0.00, 1.17],
    [-0.12, 0.00, 1.00],
    [-0.12, -0.19, 0.97],
    [-0.05, -0.22, 0.72],
    [0.15, -0.20, 0.60],
    [-0.12, 0.19, 0.97],
    [-0.05, 0.22, 0.72],
    [0.15, 0.20, 0.60],
    [-0.20, -0.10, 0.50],
    [0.25, -0.10, 0.52],
    [0.25, -0.10, 0.08],
    [-0.20, 0.10, 0.50],
    [0.25, 0.10, 0.52],
    [0.25, 0.10, 0.08],
])

R_ELBOW, R_WRIST = 3, 4
ROOM_MARGIN = 0.5
JITTER = 0.01


def _smooth(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _envelope(u, ramp=0.2):
    """0 -> 1 over the first ``ramp`` of the segment and back to 0 over the last."""
    return float(min(_smooth(u / ramp), _smooth((1.0 - u) / ramp)))


def _keyframes(u, keys):
    """Piecewise smoothstep interpolation through ``[(u_k, pose_k), ...]``."""
    for (u0, p0), (u1, p1) in zip(keys, keys[1:]):
        if u <= u1:
            return p0 + _smooth((u - u0) / (u1 - u0)) * (p1 - p0)
    return keys[-1][1]


def _arm(pose, elbow, wrist, w):
    pose = pose.copy()
    pose[R_ELBOW] += w * (np.asarray(elbow) - pose[R_ELBOW])
    pose[R_WRIST] += w * (np.asarray(wrist) - pose[R_WRIST])
    return pose


def _pose(name: str, u: float, tl: int, prm: dict) -> Tuple[np.ndarray, float]:
    """Body-frame pose and forward speed (m/frame) at phase ``u`` of an action."""
    t = tl / FPS
    amp = prm["amp"]
    if name == "walk":
        env = _envelope(u, 0.15)
        phase = 2 * math.pi * prm["freq"] * t
        swing = 0.26 * amp * env * math.sin(phase)
        lift = 0.08 * env
        pose = REST.copy()
        pose[[9, 10], 0] += [0.5 * swing, swing]
        pose[[12, 13], 0] -= [0.5 * swing, swing]
        pose[10, 2] += lift * max(0.0, math.cos(phase))
        pose[13, 2] += lift * max(0.0, -math.cos(phase))
        pose[[3, 4], 0] -= [0.3 * swing, 0.6 * swing]
        pose[[6, 7], 0] += [0.3 * swing, 0.6 * swing]
        return pose, prm["speed"] * env / FPS
    if name == "sit-down":
        s = _keyframes(u, [(0.0, 0.0), (0.35, 1.0), (0.65, 1.0), (1.0, 0.0)])
        return REST + s * (SEATED - REST), 0.0
    if name == "wave":
        w = _envelope(u)
        y = -0.35 + 0.15 * amp * math.sin(2 * math.pi * prm["freq"] * 1.4 * t)
        return _arm(REST, (0.05, -0.35, 1.50), (0.05, y, 1.80), w), 0.0
    if name == "point":
        w = _envelope(u, 0.25)
        return _arm(REST, (0.30, -0.20, 1.41), (0.30 + 0.28 * amp, -0.20, 1.42), w), 0.0
    if name == "throw":
        rest_arm = np.stack([REST[R_ELBOW], REST[R_WRIST]])
        wind = np.array([[-0.15, -0.30, 1.50], [-0.35, -0.28, 1.65]])
        release = np.array([[0.30, -0.22, 1.45], [0.60 * amp, -0.20, 1.35]])
        arm = _keyframes(u, [(0.0, rest_arm), (0.4, wind), (0.6, release), (1.0, rest_arm)])
        pose = _arm(REST, arm[0], arm[1], 1.0)
        lean = 0.10 * _keyframes(u, [(0.0, 0.0), (0.4, -0.5), (0.6, 1.0), (1.0, 0.0)])
        pose[[0, 1, 2, 5], 0] += lean
        return pose, 0.0
    if name == "hand-shake":
        w = _envelope(u)
        z = 1.05 + 0.04 * amp * math.sin(2 * math.pi * 3.0 * t)
        return _arm(REST, (0.22, -0.12, 1.10), (0.42, -0.02, z), w), 0.0
    raise KeyError(f"no motion model for {name!r}")


def _segment_params(rng) -> dict:
    return {
        "amp": float(rng.uniform(0.85, 1.15)),
        "freq": float(rng.uniform(0.9, 1.3)),
        "speed": float(rng.uniform(0.9, 1.3)),
    }


def synth_motion(scenario: Scenario, vocab=DEFAULT_CLASSES) -> Tuple[List[SkeletonFrame], List[ActionSegment]]:
    """Simulate every person for every frame of ``scenario``.

    Returns the skeleton frames (confidence 1 everywhere) and the scripted
    ground-truth segments. Output is a pure function of the scenario.
    """
    scenario.validate(vocab)
    rng = np.random.default_rng(scenario.seed)
    room = np.asarray(scenario.room[:2])

    timeline: Dict[int, list] = {p.id: [] for p in scenario.persons}
    segments = []
    for p in scenario.persons:
        for a in p.actions:
            timeline[p.id].append((a.start, a.end, a.action, None, _segment_params(rng)))
            segments.append(ActionSegment(vocab.by_name(a.action).class_id, a.start, a.end, (p.id,)))
    for it in scenario.interactions:
        prm = _segment_params(rng)
        a, b = it.persons
        timeline[a].append((it.start, it.end, it.action, b, prm))
        timeline[b].append((it.start, it.end, it.action, a, prm))
        segments.append(ActionSegment(vocab.by_name(it.action).class_id, it.start, it.end, (a, b)))
    segments.sort(key=lambda s: (s.start_frame, s.participants, s.class_id))

    state = {
        p.id: {
            "pos": np.array(p.position, dtype=float),
            "heading": math.radians(p.heading),
            "scale": p.height,
            "turn_from": None,
        }
        for p in scenario.persons
    }
    frames = []
    for f in range(scenario.duration):
        persons = {}
        for p in scenario.persons:
            st = state[p.id]
            active = next((e for e in timeline[p.id] if e[0] <= f < e[1]), None)
            if active is None:
                pose, speed = REST, 0.0
                st["turn_from"] = None
            else:
                start, end, name, partner, prm = active
                u = (f - start) / max(1, end - start - 1)
                pose, speed = _pose(name, u, f - start, prm)
                if partner is not None:
                    if st["turn_from"] is None:
                        st["turn_from"] = st["heading"]
                    d = state[partner]["pos"] - st["pos"]
                    target = math.atan2(d[1], d[0])
                    delta = (target - st["turn_from"] + math.pi) % (2 * math.pi) - math.pi
                    st["heading"] = st["turn_from"] + _smooth(u / 0.2) * delta
            if speed > 0:
                step = speed * np.array([math.cos(st["heading"]), math.sin(st["heading"])])
                nxt = st["pos"] + step
                for k in range(2):
                    if not ROOM_MARGIN <= nxt[k] <= room[k] - ROOM_MARGIN:
                        step[k] = -step[k]
                        st["heading"] = math.atan2(step[1], step[0])
                st["pos"] = st["pos"] + step
            c, s = math.cos(st["heading"]), math.sin(st["heading"])
            body = pose * st["scale"]
            xy = st["pos"] + np.outer(body[:, 0], [c, s]) + np.outer(body[:, 1], [-s, c])
            joints = np.empty((len(pose), 4))
            joints[:, :2] = xy
            joints[:, 2] = body[:, 2]
            joints[:, :3] += rng.normal(0.0, JITTER, size=(len(pose), 3))
            joints[:, 2] = np.maximum(joints[:, 2], 0.0)
            joints[:, 3] = 1.0
            persons[p.id] = joints
        frames.append(SkeletonFrame(f, persons))
    return frames, segments
