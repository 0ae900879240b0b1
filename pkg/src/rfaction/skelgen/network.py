from __future__ import annotations

from typing import List

import numpy as np
import torch
from torch import nn

from ..core.types import SkeletonFrame
from ..simkit.render import GridSpec, HeatmapStream
from .features import FeatureNet
from .pose import PoseHead, PoseOutput
from .rpn import RegionProposal, RegionProposalNet, propose_regions


class SkeletonGenerator(nn.Module):
    """Heatmap windows -> region proposals -> per-proposal 3D skeletons."""

    def __init__(
        self,
        grid: GridSpec = GridSpec(),
        window: int = 30,
        widths=(8, 16, 32, 32),
        n_joints: int = 14,
        crop: int = 16,
        depth_bins: int = 16,
        pose_hidden: int = 16,
        anchor_size=(10.0, 10.0),
        temperature: float = 1.0,
    ):
        super().__init__()
        self.grid, self.window = grid, window
        self.feature_net = FeatureNet(widths, window=window, horizontal=grid.horizontal, vertical=grid.vertical)
        self.rpn = RegionProposalNet(widths[-1], widths[-1], anchor_size, self.feature_net.spatial_stride)
        self.pose = PoseHead(
            widths[-1], n_joints, crop, depth_bins, pose_hidden,
            self.feature_net.spatial_stride, self.feature_net.temporal_stride, temperature,
        )

    def windows(self, stream: HeatmapStream):
        """Split a stream into back-to-back windows; the last is zero-padded.

        Yields ``(start_frame, n_valid, horizontal, vertical)`` tensors.
        """
        T, W = len(stream), self.window
        for start in range(0, T, W):
            h = np.zeros((W, *self.grid.horizontal), np.float32)
            v = np.zeros((W, *self.grid.vertical), np.float32)
            n = min(W, T - start)
            h[:n] = stream.horizontal[start:start + n]
            v[:n] = stream.vertical[start:start + n]
            yield start, n, torch.from_numpy(h), torch.from_numpy(v)

    @torch.no_grad()
    def infer(self, stream: HeatmapStream, score_thresh: float = 0.5, nms_iou: float = 0.3,
              max_proposals: int = 8) -> List[SkeletonFrame]:
        """Per-frame skeleton detections for a whole stream (ids are per-window proposal ranks)."""
        dtype = next(self.parameters()).dtype
        frames: List[SkeletonFrame] = []
        for start, n, h, v in self.windows(stream):
            h, v = h.to(dtype), v.to(dtype)
            maps = self.feature_net(h[None], v[None])
            props: List[RegionProposal] = propose_regions(
                maps.horizontal, self.rpn, self.grid.horizontal, nms_iou, score_thresh, max_proposals
            )[0]
            if props:
                boxes = torch.tensor(np.stack([p.box for p in props]), dtype=dtype)
                pose: PoseOutput = self.pose(maps[0], h, v, boxes, self.grid)
                arr = pose.as_array()  # (P, T, J, 4)
            for t in range(n):
                persons = {k + 1: arr[k, t] for k in range(len(props))} if props else {}
                frames.append(SkeletonFrame(start + t, persons))
        return frames
