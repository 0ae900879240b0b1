"""Synthetic RF heatmaps from skeleton frames, plus the binary heatmap file.

Both grids share their first axis (x, depth from the radar at x = 0). The
horizontal grid's second axis is y, the vertical grid's is height z. Cell
``i`` is centred at ``(i + 0.5) * cell_size`` metres.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core.types import SkeletonFrame
from .scenario import RenderConfig, Scenario

# torso 1.0, limbs 0.5, wrists/ankles/head 0.25
AMPLITUDES = np.array([0.25, 1.0, 1.0, 0.5, 0.25, 1.0, 0.5, 0.25, 1.0, 0.5, 0.25, 1.0, 0.5, 0.25])

HEATMAP_MAGIC = b"RFHM"
HEATMAP_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    """Metric calibration of the two heatmap grids."""

    room: tuple = (6.4, 6.4, 3.2)
    horizontal: tuple = (64, 64)
    vertical: tuple = (64, 32)

    @property
    def cell(self) -> np.ndarray:
        """Cell size in metres along (x, y, z)."""
        return np.array([
            self.room[0] / self.horizontal[0],
            self.room[1] / self.horizontal[1],
            self.room[2] / self.vertical[1],
        ])

    def to_cells(self, xyz):
        """Metres -> continuous cell index coordinates (cell centres are integers)."""
        return np.asarray(xyz) / self.cell - 0.5

    def to_metres(self, cells):
        return (np.asarray(cells) + 0.5) * self.cell

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "GridSpec":
        return cls(tuple(scenario.room), scenario.render.horizontal, scenario.render.vertical)


@dataclass(eq=False)
class HeatmapStream:
    horizontal: np.ndarray  # (T, H_h, W_h)
    vertical: np.ndarray    # (T, H_v, W_v)

    def __post_init__(self):
        self.horizontal = np.asarray(self.horizontal, dtype=np.float32)
        self.vertical = np.asarray(self.vertical, dtype=np.float32)
        if self.horizontal.ndim != 3 or self.vertical.ndim != 3:
            raise ValueError("heatmaps must be (T, H, W) arrays")
        if self.horizontal.shape[0] != self.vertical.shape[0]:
            raise ValueError("horizontal and vertical streams differ in length")
        for a in (self.horizontal, self.vertical):
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError("heatmap intensities must be finite and non-negative")

    def __len__(self):
        return self.horizontal.shape[0]

    def __getitem__(self, sl: slice) -> "HeatmapStream":
        return HeatmapStream(self.horizontal[sl], self.vertical[sl])

    def __eq__(self, other):
        return (
            isinstance(other, HeatmapStream)
            and np.array_equal(self.horizontal, other.horizontal)
            and np.array_equal(self.vertical, other.vertical)
        )


def _gauss(centres: np.ndarray, n: int, sigma: float) -> np.ndarray:
    idx = np.arange(n)
    return np.exp(-((idx[None, :] - centres[:, None]) ** 2) / (2 * sigma * sigma))


def splat(points_cells: np.ndarray, amplitudes: np.ndarray, shape, sigma: float) -> np.ndarray:
    """Sum of isotropic Gaussians at 2D cell coordinates ``(n, 2)``."""
    ga = _gauss(points_cells[:, 0], shape[0], sigma) * amplitudes[:, None]
    gb = _gauss(points_cells[:, 1], shape[1], sigma)
    return ga.T @ gb


def joint_amplitudes(joints: np.ndarray, scenario: Scenario) -> np.ndarray:
    amp = AMPLITUDES[: joints.shape[0]].copy()
    if scenario.wall is not None:
        amp = np.where(joints[:, 0] > scenario.wall.x, amp * scenario.wall.alpha, amp)
    return amp


def render_frame(frame: SkeletonFrame, scenario: Scenario, grid: GridSpec | None = None):
    """Render one frame; randomness is keyed on (seed, frame_index) only."""
    cfg: RenderConfig = scenario.render
    grid = grid or GridSpec.from_scenario(scenario)
    rng = np.random.default_rng([scenario.seed, 0x52464D, frame.frame_index])
    joints = np.concatenate([j for j in frame.persons.values()], axis=0) if frame.persons else np.zeros((0, 4))
    amp = np.concatenate([joint_amplitudes(j, scenario) for j in frame.persons.values()]) if frame.persons else np.zeros(0)
    keep = rng.random(amp.shape[0]) >= cfg.p_spec
    amp = amp * keep
    cells = grid.to_cells(joints[:, :3])
    h = splat(cells[:, [0, 1]], amp, cfg.horizontal, cfg.sigma)
    v = splat(cells[:, [0, 2]], amp, cfg.vertical, cfg.sigma)
    h_noise = rng.normal(0.0, 1.0, size=h.shape)
    v_noise = rng.normal(0.0, 1.0, size=v.shape)
    if cfg.noise > 0:
        h = np.maximum(h + cfg.noise * h_noise, 0.0)
        v = np.maximum(v + cfg.noise * v_noise, 0.0)
    return h.astype(np.float32), v.astype(np.float32)


def render_heatmaps(frames: Sequence[SkeletonFrame], scenario: Scenario) -> HeatmapStream:
    """Project every frame's joints to horizontal (x, y) and vertical (x, z) heatmaps.

    Each joint contributes a Gaussian blob whose amplitude follows
    :data:`AMPLITUDES`, is dropped with probability ``p_spec`` (specular
    reflection away from the radar) and is scaled by the wall's ``alpha``
    when the joint lies beyond it. Additive noise is clipped at zero.
    """
    grid = GridSpec.from_scenario(scenario)
    if not frames:
        return HeatmapStream(np.zeros((0, *scenario.render.horizontal)), np.zeros((0, *scenario.render.vertical)))
    hs, vs = zip(*(render_frame(fr, scenario, grid) for fr in frames))
    return HeatmapStream(np.stack(hs), np.stack(vs))


def write_heatmaps(path, stream: HeatmapStream) -> None:
    T, hh, wh = stream.horizontal.shape
    _, hv, wv = stream.vertical.shape
    with open(path, "wb") as fh:
        fh.write(HEATMAP_MAGIC)
        fh.write(struct.pack("<H5I", HEATMAP_VERSION, T, hh, wh, hv, wv))
        for t in range(T):
            fh.write(stream.horizontal[t].astype("<f4").tobytes())
            fh.write(stream.vertical[t].astype("<f4").tobytes())


def read_heatmaps(path) -> HeatmapStream:
    from ..core.formats import FormatError

    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != HEATMAP_MAGIC:
        raise FormatError("bad magic, expected RFHM", field="magic", path=path)
    if len(data) < 26:
        raise FormatError("truncated header", field="header", path=path)
    version, T, hh, wh, hv, wv = struct.unpack_from("<H5I", data, 4)
    if version != HEATMAP_VERSION:
        raise FormatError(f"unsupported version {version}", field="version", path=path)
    n = T * (hh * wh + hv * wv)
    if len(data) != 26 + 4 * n:
        raise FormatError(f"expected {26 + 4 * n} bytes, got {len(data)}", field="data", path=path)
    flat = np.frombuffer(data, dtype="<f4", offset=26).reshape(T, hh * wh + hv * wv)
    h = flat[:, : hh * wh].reshape(T, hh, wh).astype(np.float32)
    v = flat[:, hh * wh:].reshape(T, hv, wv).astype(np.float32)
    try:
        return HeatmapStream(h, v)
    except ValueError as exc:
        raise FormatError(str(exc), field="data", path=path) from None
