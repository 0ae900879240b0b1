"""Scenario description: room, optional wall, and per-person action scripts.

Scenario files are YAML::

    seed: 7
    duration: 240            # frames at 30 FPS
    room: [6.4, 6.4, 3.2]    # metres (x, y, z)
    wall: {x: 4.0, alpha: 0.5}
    render: {horizontal: [64, 64], vertical: [64, 32], sigma: 1.5, p_spec: 0.2, noise: 0.02}
    persons:
      - id: 1
        position: [2.0, 3.0]
        heading: 0.0         # degrees, 0 = +x
        height: 1.0          # scale on a ~1.65 m body
        actions:
          - {action: wave, start: 30, end: 90}
    interactions:
      - {action: hand-shake, persons: [1, 2], start: 120, end: 160}
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import yaml

from ..core.types import ACTION, DEFAULT_CLASSES, INTERACTION, ClassVocabulary

CLASS_LENGTHS = {
    "walk": (40, 64),
    "sit-down": (36, 60),
    "wave": (24, 48),
    "point": (20, 40),
    "throw": (16, 32),
    "hand-shake": (30, 54),
}


@dataclass(frozen=True)
class Wall:
    x: float
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("wall attenuation alpha must lie in (0, 1]")


@dataclass
class RenderConfig:
    horizontal: Tuple[int, int] = (64, 64)
    vertical: Tuple[int, int] = (64, 32)
    sigma: float = 1.5
    p_spec: float = 0.2
    noise: float = 0.02

    def __post_init__(self):
        self.horizontal = tuple(int(v) for v in self.horizontal)
        self.vertical = tuple(int(v) for v in self.vertical)
        if self.horizontal[0] != self.vertical[0]:
            raise ValueError("horizontal and vertical grids must share the x axis length")
        if self.sigma <= 0 or not 0.0 <= self.p_spec < 1.0 or self.noise < 0:
            raise ValueError("invalid render parameters")


@dataclass
class ScriptedAction:
    action: str
    start: int
    end: int


@dataclass
class PersonScript:
    id: int
    position: Tuple[float, float]
    heading: float = 0.0
    height: float = 1.0
    actions: List[ScriptedAction] = field(default_factory=list)


@dataclass
class InteractionScript:
    action: str
    persons: Tuple[int, int]
    start: int
    end: int


@dataclass
class Scenario:
    seed: int
    duration: int
    room: Tuple[float, float, float] = (6.4, 6.4, 3.2)
    persons: List[PersonScript] = field(default_factory=list)
    interactions: List[InteractionScript] = field(default_factory=list)
    wall: Optional[Wall] = None
    render: RenderConfig = field(default_factory=RenderConfig)

    def validate(self, vocab: ClassVocabulary = DEFAULT_CLASSES) -> "Scenario":
        if self.duration < 1:
            raise ValueError("duration must be >= 1 frame")
        ids = [p.id for p in self.persons]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate person ids")
        busy = {pid: [] for pid in ids}
        for p in self.persons:
            x, y = p.position
            if not (0 < x < self.room[0] and 0 < y < self.room[1]):
                raise ValueError(f"person {p.id} starts outside the room")
            for a in p.actions:
                if vocab.by_name(a.action).kind != ACTION:
                    raise ValueError(f"{a.action!r} is not a single-person action")
                busy[p.id].append(self._interval(a.start, a.end, f"person {p.id} {a.action}"))
        for it in self.interactions:
            if vocab.by_name(it.action).kind != INTERACTION:
                raise ValueError(f"{it.action!r} is not an interaction")
            if len(set(it.persons)) != 2 or any(q not in busy for q in it.persons):
                raise ValueError(f"interaction needs two known persons, got {it.persons}")
            span = self._interval(it.start, it.end, f"{it.action} {it.persons}")
            for q in it.persons:
                busy[q].append(span)
        for pid, spans in busy.items():
            spans.sort()
            for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
                if s1 < e0:
                    raise ValueError(f"person {pid} has overlapping scripts at frames {s1}..{e0}")
        return self

    def _interval(self, start, end, what):
        if not 0 <= start < end <= self.duration:
            raise ValueError(f"{what}: interval [{start}, {end}) outside [0, {self.duration})")
        return (start, end)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["room"] = list(self.room)
        d["render"]["horizontal"] = list(self.render.horizontal)
        d["render"]["vertical"] = list(self.render.vertical)
        for p in d["persons"]:
            p["position"] = list(p["position"])
        for it in d["interactions"]:
            it["persons"] = list(it["persons"])
        if self.wall is None:
            d.pop("wall")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {"seed", "duration", "room", "persons", "interactions", "wall", "render"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown scenario keys: {sorted(extra)}")
        persons = [
            PersonScript(
                id=int(p["id"]),
                position=tuple(float(v) for v in p["position"]),
                heading=float(p.get("heading", 0.0)),
                height=float(p.get("height", 1.0)),
                actions=[ScriptedAction(a["action"], int(a["start"]), int(a["end"])) for a in p.get("actions", [])],
            )
            for p in d.get("persons", [])
        ]
        inter = [
            InteractionScript(i["action"], tuple(int(q) for q in i["persons"]), int(i["start"]), int(i["end"]))
            for i in d.get("interactions", [])
        ]
        wall = Wall(**d["wall"]) if d.get("wall") else None
        return cls(
            seed=int(d["seed"]),
            duration=int(d["duration"]),
            room=tuple(float(v) for v in d.get("room", (6.4, 6.4, 3.2))),
            persons=persons,
            interactions=inter,
            wall=wall,
            render=RenderConfig(**d.get("render", {})),
        ).validate()


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return Scenario.from_dict(yaml.safe_load(fh) or {})


def save_scenario(path, scenario: Scenario) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario.to_dict(), fh, sort_keys=False)


def _fill(rng, start, end, choices, out):
    cursor = start + int(rng.integers(6, 25))
    while True:
        name = choices[int(rng.integers(len(choices)))]
        lo, hi = CLASS_LENGTHS[name]
        length = int(rng.integers(lo, hi + 1))
        if cursor + length > end:
            length = end - cursor
            if length < lo:
                return
        out.append(ScriptedAction(name, cursor, cursor + length))
        cursor += length + int(rng.integers(6, 25))


def random_scenario(
    seed: int,
    n_persons: int = 2,
    duration: int = 240,
    room=(6.4, 6.4, 3.2),
    wall: Optional[Wall] = None,
    p_interaction: float = 0.8,
    render: Optional[RenderConfig] = None,
) -> Scenario:
    """Draw a scripted scenario with random placements and action timelines.

    When the first two persons shake hands they start facing each other a
    little under a metre apart, and nobody walks before the hand-shake so the
    pair is still together when it happens.
    """
    rng = np.random.default_rng(seed)
    singles = [n for n in CLASS_LENGTHS if n != "hand-shake"]
    lo_xy, hi_xy = 1.5, min(room[0], room[1]) - 1.5
    shake = n_persons >= 2 and rng.random() < p_interaction
    persons: List[PersonScript] = []
    for k in range(n_persons):
        for _ in range(1000):
            pos = rng.uniform(lo_xy, hi_xy, size=2)
            heading = float(rng.uniform(-180, 180))
            if k == 1 and shake:
                p0 = persons[0]
                h = math.radians(p0.heading)
                d = rng.uniform(0.85, 0.95)
                pos = np.array(p0.position) + d * np.array([math.cos(h), math.sin(h)])
                heading = (p0.heading + 180.0 + 180.0) % 360.0 - 180.0
            ok = lo_xy - 0.6 <= pos.min() and pos.max() <= hi_xy + 0.6
            ok = ok and all(np.hypot(*(pos - np.array(q.position))) > 0.8 for q in persons)
            if ok:
                break
        persons.append(
            PersonScript(k + 1, (round(float(pos[0]), 4), round(float(pos[1]), 4)), round(heading, 3),
                         round(float(rng.uniform(0.92, 1.08)), 4))
        )
    interactions = []
    if shake:
        lo, hi = CLASS_LENGTHS["hand-shake"]
        h0 = int(rng.integers(10, max(11, int(duration * 0.45))))
        h1 = min(duration, h0 + int(rng.integers(lo, hi + 1)))
        interactions.append(InteractionScript("hand-shake", (1, 2), h0, h1))
    for p in persons:
        if shake and p.id in (1, 2):
            _fill(rng, 0, interactions[0].start, [n for n in singles if n != "walk"], p.actions)
            _fill(rng, interactions[0].end, duration, singles, p.actions)
        else:
            _fill(rng, 0, duration, singles, p.actions)
    return Scenario(seed, duration, tuple(room), persons, interactions, wall, render or RenderConfig()).validate()
