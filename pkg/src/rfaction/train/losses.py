from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from ..core.tracking import greedy_pairs
from ..core.types import TORSO_JOINTS
from ..detect import ClassifierOutput, SlotOutput, label_windows
from ..skelgen.rpn import encode, rpn_targets

SKELETON_BETA = 0.1
BOUNDARY_BETA = 0.1


def smooth_l1(x: torch.Tensor, beta: float) -> torch.Tensor:
    """Elementwise ``0.5 x^2 / beta`` below ``beta``, ``|x| - beta / 2`` above."""
    ax = x.abs()
    return torch.where(ax < beta, 0.5 * ax * ax / beta, ax - 0.5 * beta)


def greedy_match(pred_centroids: np.ndarray, gt_centroids: np.ndarray) -> List[Tuple[int, int]]:
    """Pairs ``(pred, gt)`` accepted in ascending centroid distance, each index used once."""
    if len(pred_centroids) == 0 or len(gt_centroids) == 0:
        return []
    d = np.linalg.norm(pred_centroids[:, None] - gt_centroids[None], axis=-1)
    return sorted(greedy_pairs(d), key=lambda ij: ij[1])


def loss_skeleton(pred: torch.Tensor, gt: torch.Tensor, beta: float = SKELETON_BETA) -> torch.Tensor:
    """Smooth-L1 joint error in metres, matched by greedy torso-centroid distance.

    ``pred`` is ``(P, T, N_j, 3)``, ``gt`` is ``(G, T, N_j, >=3)``. The
    per-joint loss sums the three coordinates and is averaged over joints,
    frames and matched persons. Unmatched predictions contribute nothing.
    """
    gt = gt[..., :3].to(pred.dtype)
    with torch.no_grad():
        pc = pred[:, :, list(TORSO_JOINTS)].mean(dim=(1, 2)).cpu().numpy()
        gc = gt[:, :, list(TORSO_JOINTS)].mean(dim=(1, 2)).cpu().numpy()
    pairs = greedy_match(pc, gc)
    if not pairs:
        return pred.sum() * 0.0
    pi = [i for i, _ in pairs]
    gi = [j for _, j in pairs]
    return smooth_l1(pred[pi] - gt[gi], beta).sum(-1).mean()


def _balanced_bce(logits: torch.Tensor, labels: np.ndarray) -> torch.Tensor:
    lab = torch.as_tensor(labels)
    pos, neg = lab == 1, lab == 0
    target = pos.to(logits.dtype)
    bce = F.binary_cross_entropy_with_logits(logits, target, reduction="none")
    out = logits.sum() * 0.0
    if pos.any():
        out = out + bce[pos].mean()
    if neg.any():
        out = out + bce[neg].mean()
    return out


def rpn_loss(logits: torch.Tensor, deltas: torch.Tensor, anchors: torch.Tensor,
             gt_boxes: Sequence[np.ndarray]) -> torch.Tensor:
    """Objectness BCE plus smooth-L1 box regression for one window's anchors."""
    labels, match = rpn_targets(anchors.detach().cpu().numpy(), gt_boxes)
    loss = _balanced_bce(logits, labels)
    pos = np.flatnonzero(labels == 1)
    if pos.size:
        gt = torch.as_tensor(np.asarray(gt_boxes)[match[pos]], dtype=deltas.dtype)
        target = encode(anchors[pos], gt)
        loss = loss + smooth_l1(deltas[pos] - target, 1.0 / 9).sum(-1).mean()
    return loss


@dataclass
class DetectionTargets:
    windows: np.ndarray   # (G, 2) frames
    classes: np.ndarray   # (G,) index into the slot kind's class list


def _window_offsets(windows: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    length = (windows[:, 1] - windows[:, 0]).clamp(min=1e-6)
    return (gt - windows) / length[:, None]


def loss_detection(out: SlotOutput, cls: ClassifierOutput, targets: DetectionTargets,
                   pos_iou: float = 0.5, neg_iou: float = 0.3) -> Dict[str, torch.Tensor]:
    """Proposal and classifier losses for one slot.

    Each stage labels its windows positive at IoU >= ``pos_iou`` with some
    ground truth, negative below ``neg_iou`` and ignores the rest. Terms:
    anchor actionness BCE and centre/length regression; classifier
    actionness BCE, class cross-entropy and boundary smooth-L1 (positives
    only).
    """
    gt = targets.windows.reshape(-1, 2)
    zero = out.logits.sum() * 0.0
    terms = {}

    anchor_win = out.anchor_windows().detach().double().cpu().numpy()
    labels, match = label_windows(anchor_win, gt, pos_iou, neg_iou)
    terms["proposal_bce"] = _balanced_bce(out.logits, labels)
    pos = np.flatnonzero(labels == 1)
    if pos.size:
        g = torch.as_tensor(gt[match[pos]], dtype=out.deltas.dtype)
        a = out.anchors[pos]
        target = torch.stack([((g[:, 0] + g[:, 1]) / 2 - a[:, 0]) / a[:, 1], torch.log((g[:, 1] - g[:, 0]) / a[:, 1])], -1)
        terms["proposal_reg"] = smooth_l1(out.deltas[pos] - target, BOUNDARY_BETA).sum(-1).mean()
    else:
        terms["proposal_reg"] = zero

    win = cls.windows.detach().double().cpu().numpy()
    labels, match = label_windows(win, gt, pos_iou, neg_iou)
    terms["actionness_bce"] = _balanced_bce(cls.actionness, labels)
    pos = np.flatnonzero(labels == 1)
    if pos.size:
        cls_target = torch.as_tensor(targets.classes[match[pos]], dtype=torch.long)
        terms["class_ce"] = F.cross_entropy(cls.class_logits[pos], cls_target)
        g = torch.as_tensor(gt[match[pos]], dtype=cls.offsets.dtype)
        target = _window_offsets(cls.windows[pos].to(g.dtype), g)
        terms["boundary"] = smooth_l1(cls.offsets[pos] - target, BOUNDARY_BETA).sum(-1).mean()
    else:
        terms["class_ce"] = zero
        terms["boundary"] = zero
    return terms
