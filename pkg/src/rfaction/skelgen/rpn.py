"""Single-anchor region proposals on the horizontal feature map.

Boxes are ``(cx, cy, w, h)`` in horizontal-grid cell coordinates, ``cx``
running along the first (x) axis. Feature cell ``i`` sits at grid coordinate
``stride * i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch
from torch import nn

MAX_LOG_SCALE = math.log(4.0)


@dataclass(frozen=True)
class RegionProposal:
    cx: float
    cy: float
    w: float
    h: float
    score: float

    @property
    def box(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h])


def box_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU between ``(n, 4)`` and ``(m, 4)`` centre/size boxes."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    a0, a1 = a[:, None, :2] - a[:, None, 2:] / 2, a[:, None, :2] + a[:, None, 2:] / 2
    b0, b1 = b[None, :, :2] - b[None, :, 2:] / 2, b[None, :, :2] + b[None, :, 2:] / 2
    wh = np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = (a[:, None, 2] * a[:, None, 3]) + (b[None, :, 2] * b[None, :, 3]) - inter
    return inter / np.maximum(union, 1e-12)


def nms(boxes: np.ndarray, scores: np.ndarray, iou_thresh: float) -> List[int]:
    """Greedy NMS; a box is dropped when its IoU with a kept box exceeds ``iou_thresh``."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    keep: List[int] = []
    while order.size:
        i = int(order[0])
        keep.append(i)
        if order.size == 1:
            break
        ious = box_iou(boxes[i], boxes[order[1:]])[0]
        order = order[1:][ious <= iou_thresh]
    return keep


def encode(anchors: torch.Tensor, boxes: torch.Tensor) -> torch.Tensor:
    return torch.stack([
        (boxes[..., 0] - anchors[..., 0]) / anchors[..., 2],
        (boxes[..., 1] - anchors[..., 1]) / anchors[..., 3],
        torch.log(boxes[..., 2] / anchors[..., 2]),
        torch.log(boxes[..., 3] / anchors[..., 3]),
    ], dim=-1)


def decode(anchors: torch.Tensor, deltas: torch.Tensor) -> torch.Tensor:
    dw = deltas[..., 2].clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE)
    dh = deltas[..., 3].clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE)
    return torch.stack([
        anchors[..., 0] + deltas[..., 0] * anchors[..., 2],
        anchors[..., 1] + deltas[..., 1] * anchors[..., 3],
        anchors[..., 2] * torch.exp(dw),
        anchors[..., 3] * torch.exp(dh),
    ], dim=-1)


def clip_boxes(boxes: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Clip centre/size boxes to the grid extent ``[-0.5, n - 0.5]`` per axis."""
    lo = np.clip(boxes[:, :2] - boxes[:, 2:] / 2, -0.5, np.array(shape) - 0.5)
    hi = np.clip(boxes[:, :2] + boxes[:, 2:] / 2, -0.5, np.array(shape) - 0.5)
    return np.concatenate([(lo + hi) / 2, hi - lo], axis=1)


class RegionProposalNet(nn.Module):
    def __init__(self, in_channels: int = 32, hidden: int = 32, anchor_size=(10.0, 10.0), stride: int = 4):
        super().__init__()
        self.anchor_size, self.stride = tuple(float(a) for a in anchor_size), stride
        self.conv = nn.Conv2d(in_channels, hidden, 3, padding=1)
        self.score = nn.Conv2d(hidden, 1, 1)
        self.reg = nn.Conv2d(hidden, 4, 1)
        nn.init.constant_(self.score.bias, -2.0)
        nn.init.zeros_(self.reg.weight)
        nn.init.zeros_(self.reg.bias)

    def anchors(self, h: int, w: int, dtype=torch.float32) -> torch.Tensor:
        """``(h * w, 4)`` anchors in row-major feature-cell order."""
        ii, jj = torch.meshgrid(torch.arange(h, dtype=dtype), torch.arange(w, dtype=dtype), indexing="ij")
        aw = torch.full_like(ii, self.anchor_size[0])
        ah = torch.full_like(ii, self.anchor_size[1])
        return torch.stack([ii * self.stride, jj * self.stride, aw, ah], dim=-1).reshape(-1, 4)

    def forward(self, features: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Objectness logits ``(B, A)`` and box deltas ``(B, A, 4)`` from ``(B, C, T', H', W')``."""
        x = torch.relu(self.conv(features.mean(dim=2)))
        logits = self.score(x).flatten(1)
        deltas = self.reg(x).flatten(2).transpose(1, 2)
        return logits, deltas


def propose_regions(
    features: torch.Tensor,
    rpn: RegionProposalNet,
    grid_shape: Tuple[int, int],
    nms_iou: float = 0.3,
    score_thresh: float = 0.5,
    max_proposals: int = 8,
) -> List[List[RegionProposal]]:
    """Score every anchor, regress boxes, keep the NMS survivors above ``score_thresh``.

    Returns one list per batch item, each sorted by descending score.
    """
    with torch.no_grad():
        logits, deltas = rpn(features)
        anchors = rpn.anchors(*features.shape[-2:], dtype=deltas.dtype)
        boxes = decode(anchors.unsqueeze(0), deltas).cpu().numpy().astype(np.float64)
        scores = torch.sigmoid(logits).cpu().numpy().astype(np.float64)
    out = []
    for b in range(scores.shape[0]):
        sel = np.flatnonzero(scores[b] >= score_thresh)
        if sel.size == 0:
            out.append([])
            continue
        cand = clip_boxes(boxes[b, sel], grid_shape)
        ok = (cand[:, 2] > 0) & (cand[:, 3] > 0)
        sel, cand = sel[ok], cand[ok]
        keep = nms(cand, scores[b, sel], nms_iou)[:max_proposals]
        out.append([RegionProposal(*map(float, cand[k]), float(scores[b, sel[k]])) for k in keep])
    return out


def rpn_targets(
    anchors: np.ndarray, gt_boxes: Sequence[np.ndarray], pos_iou: float = 0.5, neg_iou: float = 0.3
) -> Tuple[np.ndarray, np.ndarray]:
    """Anchor labels (1 positive, 0 negative, -1 ignored) and the matched GT index.

    The best anchor for each ground-truth box is positive regardless of IoU.
    """
    labels = np.zeros(len(anchors), dtype=int)
    match = np.full(len(anchors), -1, dtype=int)
    if len(gt_boxes) == 0:
        return labels, match
    ious = box_iou(anchors, np.asarray(gt_boxes))
    best = ious.argmax(1)
    best_iou = ious.max(1)
    labels[(best_iou >= neg_iou) & (best_iou < pos_iou)] = -1
    pos = best_iou >= pos_iou
    for g in range(ious.shape[1]):
        pos[int(np.argmax(ious[:, g]))] = True
        best[int(np.argmax(ious[:, g]))] = g
    labels[pos] = 1
    match[pos] = best[pos]
    return labels, match
