"""3D pose sub-network: crop both views around a proposal, emit per-joint volumes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..core.types import TORSO_JOINTS
from ..simkit.render import GridSpec
from .features import FeatureMaps
from .softargmax import soft_argmax, soft_argmax_separable


@dataclass
class PoseOutput:
    coords: torch.Tensor      # (P, T, N_j, 3) metres
    confidence: torch.Tensor  # (P, T, N_j), max of the normalised joint volume

    def detach(self) -> "PoseOutput":
        return PoseOutput(self.coords.detach(), self.confidence.detach())

    def as_array(self) -> np.ndarray:
        """``(P, T, N_j, 4)`` numpy view with confidence in the last slot."""
        return torch.cat([self.coords, self.confidence.unsqueeze(-1)], -1).detach().cpu().double().numpy()


def person_box(joints: np.ndarray, grid: GridSpec, margin: float = 0.25) -> np.ndarray:
    """Centre/size box (horizontal-grid cells) around a person's joints over a window.

    ``joints`` is ``(T, N_j, >=3)`` in metres. The centre is the mean torso
    centroid; the box is symmetric and wide enough to contain every joint.
    """
    xy = joints[..., :2]
    centre = xy[:, list(TORSO_JOINTS)].reshape(-1, 2).mean(0)
    half = np.abs(xy.reshape(-1, 2) - centre).max(0) + margin
    cell = grid.cell[:2]
    return np.concatenate([centre / cell - 0.5, 2 * half / cell])

SMOOTH_FRAMES = 7
VELOCITY_LAG = 2
CONTEXT_GRID = 4


def _norm(coord: torch.Tensor, n: int) -> torch.Tensor:
    return coord / max(n - 1, 1) * 2 - 1


def _sample(src: torch.Tensor, rows: torch.Tensor, cols: torch.Tensor) -> torch.Tensor:
    """Bilinear samples of ``src`` ``(K, H, W)`` at the outer product of per-box
    ``rows`` ``(P, R)`` and ``cols`` ``(P, Q)`` -> ``(P, K, R, Q)``."""
    P = rows.shape[0]
    H, W = src.shape[-2:]
    r = _norm(rows, H)[:, :, None].expand(P, rows.shape[1], cols.shape[1])
    c = _norm(cols, W)[:, None, :].expand(P, rows.shape[1], cols.shape[1])
    grid = torch.stack([c, r], dim=-1).to(src.dtype)
    return F.grid_sample(src.unsqueeze(0).expand(P, *src.shape), grid, mode="bilinear",
                         padding_mode="zeros", align_corners=True)


def _resample_time(x: torch.Tensor, T: int, stride: int) -> torch.Tensor:
    """Linear interpolation along axis 1 from feature time to frames (frame t at ``t / stride``)."""
    n = x.shape[1]
    pos = torch.clamp(torch.arange(T, dtype=x.dtype) / stride, 0, n - 1)
    i0 = pos.floor().long()
    i1 = torch.clamp(i0 + 1, max=n - 1)
    w = (pos - i0.to(x.dtype)).reshape(1, T, *([1] * (x.ndim - 2)))
    return x[:, i0] * (1 - w) + x[:, i1] * w


def _smooth_time(x: torch.Tensor, frames: int = SMOOTH_FRAMES) -> torch.Tensor:
    """Moving average over axis 1 of ``(P, T, 1, A, B)``; fills in joints lost to specular dropout."""
    y = F.avg_pool3d(x.transpose(1, 2), (frames, 1, 1), stride=1, padding=(frames // 2, 0, 0),
                     count_include_pad=False)
    return y.transpose(1, 2)


def _velocity(x: torch.Tensor, lag: int = VELOCITY_LAG) -> torch.Tensor:
    """Central difference over axis 1 with edge frames repeated; the sign says which way heat moves."""
    T = x.shape[1]
    idx = torch.arange(T)
    return x[:, torch.clamp(idx + lag, max=T - 1)] - x[:, torch.clamp(idx - lag, min=0)]


def _coord_planes(rows: int, cols: int, P: int, T: int, dtype) -> torch.Tensor:
    """Two ``(P, T, 2, rows, cols)`` planes holding each crop sample's position in [-1, 1].

    Convolutions alone cannot tell where in the crop they are; these let the
    head learn body-shape priors such as the head sitting near the top.
    """
    r = torch.linspace(-1, 1, rows, dtype=dtype)[:, None].expand(rows, cols)
    c = torch.linspace(-1, 1, cols, dtype=dtype)[None, :].expand(rows, cols)
    return torch.stack([r, c]).expand(P, T, 2, rows, cols)


class PoseHead(nn.Module):
    def __init__(
        self,
        feat_channels: int = 32,
        n_joints: int = 14,
        crop: int = 16,
        depth_bins: int = 16,
        hidden: int = 16,
        spatial_stride: int = 4,
        temporal_stride: int = 4,
        temperature: float = 1.0,
    ):
        super().__init__()
        self.n_joints, self.crop, self.depth_bins = n_joints, crop, depth_bins
        self.spatial_stride, self.temporal_stride, self.temperature = spatial_stride, temporal_stride, temperature
        # both views' features, raw, smoothed and differenced heat, plus two crop coordinates
        cin = 2 * (feat_channels + 3) + 2
        # a per-frame summary of the whole crop, mixed over time, tells every
        # pixel which way the body faces and moves
        self.context = nn.Sequential(
            nn.Flatten(), nn.Linear(cin * CONTEXT_GRID ** 2, hidden), nn.ReLU(),
        )
        self.context_time = nn.Conv1d(hidden, hidden, 9, padding=4)
        self.xy = self._head(cin + hidden, hidden, n_joints)
        self.xz = self._head(cin + hidden, hidden, n_joints)

    @staticmethod
    def _head(cin, hidden, n_joints):
        return nn.Sequential(
            nn.Conv2d(cin, hidden, 1), nn.ReLU(),
            nn.Conv2d(hidden, hidden, 3, padding=1), nn.ReLU(),
            nn.Conv2d(hidden, hidden, 3, padding=2, dilation=2), nn.ReLU(),
            nn.Conv2d(hidden, n_joints, 1),
        )

    def sample_points(self, boxes: torch.Tensor, grid: GridSpec):
        """Crop sample coordinates in grid cells: x rows, y cols ``(P, S)`` and z cols ``(D,)``."""
        if torch.any(boxes[:, 2] <= 0) or torch.any(boxes[:, 3] <= 0):
            raise ValueError("degenerate proposal box (zero area)")
        S, D = self.crop, self.depth_bins
        u = (torch.arange(S, dtype=boxes.dtype) + 0.5) / S
        xs = boxes[:, :1] - boxes[:, 2:3] / 2 + u * boxes[:, 2:3]
        ys = boxes[:, 1:2] - boxes[:, 3:4] / 2 + u * boxes[:, 3:4]
        zs = (torch.arange(D, dtype=boxes.dtype) + 0.5) * (grid.vertical[1] / D) - 0.5
        return xs, ys, zs

    def to_metres(self, cells: torch.Tensor, boxes: torch.Tensor, grid: GridSpec) -> torch.Tensor:
        """Map ``(P, ..., 3)`` crop coordinates ``(d, x, y)`` to metres ``(x, y, z)``."""
        S, D = self.crop, self.depth_bins
        shape = (boxes.shape[0],) + (1,) * (cells.ndim - 2)
        x0 = (boxes[:, 0] - boxes[:, 2] / 2).reshape(shape)
        y0 = (boxes[:, 1] - boxes[:, 3] / 2).reshape(shape)
        gx = x0 + (cells[..., 1] + 0.5) * boxes[:, 2].reshape(shape) / S
        gy = y0 + (cells[..., 2] + 0.5) * boxes[:, 3].reshape(shape) / S
        gz = (cells[..., 0] + 0.5) * (grid.vertical[1] / D) - 0.5
        cell = torch.as_tensor(grid.cell, dtype=cells.dtype)
        return (torch.stack([gx, gy, gz], -1) + 0.5) * cell

    def readout(self, volume: torch.Tensor, boxes: torch.Tensor, grid: GridSpec) -> PoseOutput:
        """Coordinates and confidences from normalised volumes ``(P, T, N_j, D, S, S)``."""
        cells = soft_argmax(volume, self.temperature)
        conf = volume.flatten(-3).max(-1).values
        return PoseOutput(self.to_metres(cells, boxes, grid), conf)

    def plane_logits(self, maps: FeatureMaps, raw_h: torch.Tensor, raw_v: torch.Tensor,
                     boxes: torch.Tensor, grid: GridSpec):
        """Per-joint plane logits ``(P, T, N_j, S, S)`` over (x, y) and ``(P, T, N_j, S, D)`` over (x, z).

        ``maps`` holds unbatched ``(C, T', H', W')`` features, ``raw_h``/``raw_v``
        the ``(T, H, W)`` input heatmaps (used as a full-resolution skip path).
        Each view's crop is concatenated with the other view's crop averaged
        over its private axis, so both heads see both views.
        """
        P, T = boxes.shape[0], raw_h.shape[0]
        S, D = self.crop, self.depth_bins
        xs, ys, zs = self.sample_points(boxes, grid)
        zs = zs.unsqueeze(0).expand(P, D)
        fs = self.spatial_stride
        C, Tf = maps.horizontal.shape[:2]
        hf = _sample(maps.horizontal.flatten(0, 1), xs / fs, ys / fs).reshape(P, C, Tf, S, S)
        vf = _sample(maps.vertical.flatten(0, 1), xs / fs, zs / fs).reshape(P, C, Tf, S, D)
        hf = _resample_time(hf.transpose(1, 2), T, self.temporal_stride)  # (P, T, C, S, S)
        vf = _resample_time(vf.transpose(1, 2), T, self.temporal_stride)  # (P, T, C, S, D)
        hr = _sample(raw_h, xs, ys).unsqueeze(2)  # (P, T, 1, S, S)
        vr = _sample(raw_v, xs, zs).unsqueeze(2)  # (P, T, 1, S, D)

        hs, vs = _smooth_time(hr), _smooth_time(vr)
        h_all = torch.cat([hf, hr, hs, _velocity(hs)], 2)
        v_all = torch.cat([vf, vr, vs, _velocity(vs)], 2)
        xy_in = torch.cat([h_all, v_all.mean(-1, keepdim=True).expand(*v_all.shape[:-1], S),
                           _coord_planes(S, S, P, T, hf.dtype)], 2)
        xz_in = torch.cat([v_all, h_all.mean(-1, keepdim=True).expand(*h_all.shape[:-1], D),
                           _coord_planes(S, D, P, T, hf.dtype)], 2)
        ctx = self.context(F.adaptive_avg_pool2d(xy_in.flatten(0, 1), CONTEXT_GRID)).reshape(P, T, -1)
        ctx = torch.relu(self.context_time(ctx.transpose(1, 2))).transpose(1, 2)[..., None, None]
        xy_in = torch.cat([xy_in, ctx.expand(-1, -1, -1, S, S)], 2)
        xz_in = torch.cat([xz_in, ctx.expand(-1, -1, -1, S, D)], 2)
        lxy = self.xy(xy_in.flatten(0, 1)).reshape(P, T, self.n_joints, S, S)
        lxz = self.xz(xz_in.flatten(0, 1)).reshape(P, T, self.n_joints, S, D)
        return lxy, lxz

    def volume_logits(self, maps: FeatureMaps, raw_h: torch.Tensor, raw_v: torch.Tensor,
                      boxes: torch.Tensor, grid: GridSpec) -> torch.Tensor:
        """Per-joint logits ``(P, T, N_j, D, S, S)``: the sum of the two plane logits."""
        lxy, lxz = self.plane_logits(maps, raw_h, raw_v, boxes, grid)
        return lxy.unsqueeze(3) + lxz.transpose(-1, -2).unsqueeze(-1)

    def forward(self, maps: FeatureMaps, raw_h: torch.Tensor, raw_v: torch.Tensor,
                boxes: torch.Tensor, grid: GridSpec) -> PoseOutput:
        lxy, lxz = self.plane_logits(maps, raw_h, raw_v, boxes, grid)
        cells, conf = soft_argmax_separable(lxy, lxz, self.temperature)
        return PoseOutput(self.to_metres(cells, boxes, grid), conf)
