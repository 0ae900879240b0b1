"""Multimodal training: rf batches update both partitions, skeleton batches only the recognizer."""
from __future__ import annotations

import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from ..core.types import ActionSegment
from ..detect import MERGED, CandidateSlot, MultiProposalDetector
from ..model import SKELETON_GENERATOR, ActionRecognizer, RFActionModel
from ..skelgen.pose import person_box
from ..simkit import SimulatedScene
from .config import TrainConfig
from .data import RF, SKELETON, TrainBatch, alternate_schedule, mirror_batch, rf_batch, skeleton_batch
from .losses import DetectionTargets, loss_detection, loss_skeleton, rpn_loss
from .state import ModelState

GT_JITTERS = 2


def slot_targets(det: MultiProposalDetector, slot: CandidateSlot,
                 segments: Sequence[ActionSegment]) -> DetectionTargets:
    classes = det.kind_classes[slot.kind]
    keep = [s for s in segments if s.class_id in classes
            and (slot.kind == MERGED or s.participants == slot.participants)]
    return DetectionTargets(
        np.array([[s.start_frame, s.end_frame] for s in keep], float).reshape(-1, 2),
        np.array([classes.index(s.class_id) for s in keep], int),
    )


def jitter_windows(windows: np.ndarray, n_frames: int, rng: np.random.Generator, k: int = GT_JITTERS) -> np.ndarray:
    if len(windows) == 0:
        return np.zeros((0, 2))
    w = np.repeat(windows, k, axis=0)
    length = w[:, 1] - w[:, 0]
    centre = (w[:, 0] + w[:, 1]) / 2 + rng.normal(0, 0.1, len(w)) * length
    length = length * np.exp(rng.normal(0, 0.1, len(w)))
    lo = np.clip(centre - length / 2, 0, n_frames - 1)
    hi = np.clip(centre + length / 2, lo + 1, n_frames)
    return np.stack([lo, hi], 1)


def detection_loss(recognizer: ActionRecognizer, person_ids: Sequence[int], seqs: torch.Tensor,
                   segments: Sequence[ActionSegment], rng: np.random.Generator) -> Tuple[torch.Tensor, Dict[str, float]]:
    """Mean over candidate slots of the proposal and classifier losses."""
    det = recognizer.detector
    n_frames = seqs.shape[2]
    feats = recognizer.person_features(seqs)
    total = feats.sum() * 0.0
    logged: Dict[str, float] = {}
    slots = det.build_slots(person_ids, feats)
    for slot in slots:
        out = det.slot_forward(slot, n_frames)
        tgt = slot_targets(det, slot, segments)
        props = det.temporal_proposals(out)
        windows = np.concatenate([
            np.array([[p.start, p.end] for p in props], float).reshape(-1, 2),
            jitter_windows(tgt.windows, n_frames, rng),
        ])
        cls = det.classify(out, torch.as_tensor(windows, dtype=feats.dtype))
        for name, value in loss_detection(out, cls, tgt).items():
            total = total + value / len(slots)
            logged[name] = logged.get(name, 0.0) + float(value.detach()) / len(slots)
    return total, logged


def jitter_boxes(boxes: np.ndarray, rng: np.random.Generator, shift: float) -> np.ndarray:
    out = boxes.copy()
    out[:, :2] += rng.uniform(-shift, shift, (len(boxes), 2))
    out[:, 2:] *= np.exp(rng.uniform(-0.1, 0.1, (len(boxes), 2)))
    return out


def generator_forward(model: RFActionModel, batch: TrainBatch, rng: Optional[np.random.Generator] = None,
                      box_jitter: float = 0.0, boxes: Optional[np.ndarray] = None):
    """Skeletons for every ground-truth person over the clip, plus the proposal loss.

    Crops come from ground-truth boxes (jittered by up to ``box_jitter``
    cells) unless ``boxes`` ``(n_windows, N, 4)`` is given. Returns
    ``(coords (N, T, N_j, 3), confidence (N, T, N_j), rpn loss)``.
    """
    gen = model.skeleton_generator
    dtype = next(gen.parameters()).dtype
    wins = list(gen.windows(batch.heatmaps))
    h = torch.stack([w[2] for w in wins]).to(dtype)
    v = torch.stack([w[3] for w in wins]).to(dtype)
    maps = gen.feature_net(h, v)
    logits, deltas = gen.rpn(maps.horizontal)
    anchors = gen.rpn.anchors(*maps.horizontal.shape[-2:], dtype=dtype)
    coords, conf, rpn_total = [], [], logits.sum() * 0.0
    for b, (start, n, _, _) in enumerate(wins):
        gt = batch.joints[:, start:start + n]
        gt_boxes = np.stack([person_box(gt[k], gen.grid) for k in range(gt.shape[0])])
        rpn_total = rpn_total + rpn_loss(logits[b], deltas[b], anchors, list(gt_boxes)) / len(wins)
        if boxes is not None:
            crop = boxes[b]
        elif rng is not None and box_jitter > 0:
            crop = jitter_boxes(gt_boxes, rng, box_jitter)
        else:
            crop = gt_boxes
        pose = gen.pose(maps[b], h[b], v[b], torch.as_tensor(crop, dtype=dtype), gen.grid)
        coords.append(pose.coords[:, :n])
        conf.append(pose.confidence[:, :n])
    return torch.cat(coords, 1), torch.cat(conf, 1), rpn_total


def rf_losses(model: RFActionModel, batch: TrainBatch, mode: str = "end_to_end", lam: float = 1.0,
              rng: Optional[np.random.Generator] = None, box_jitter: float = 0.0) -> Tuple[Dict[str, torch.Tensor], Dict[str, float]]:
    rng = rng if rng is not None else np.random.default_rng(0)
    coords, conf, rpn = generator_forward(model, batch, rng, box_jitter)
    gt = torch.as_tensor(batch.joints, dtype=coords.dtype)
    skel = loss_skeleton(coords, gt)
    seqs = torch.cat([coords, conf.unsqueeze(-1)], -1).permute(0, 3, 1, 2)
    if mode == "separate":
        seqs = seqs.detach()
    det, logged = detection_loss(model.action_recognizer, batch.person_ids, seqs, batch.segments, rng)
    losses = {"skeleton": skel, "rpn": rpn, "detection": det, "total": skel + rpn + lam * det}
    return losses, logged


def skeleton_losses(model: RFActionModel, batch: TrainBatch,
                    rng: Optional[np.random.Generator] = None) -> Tuple[Dict[str, torch.Tensor], Dict[str, float]]:
    rng = rng if rng is not None else np.random.default_rng(0)
    dtype = next(model.parameters()).dtype
    seqs = torch.as_tensor(batch.sequences(), dtype=dtype)
    det, logged = detection_loss(model.action_recognizer, batch.person_ids, seqs, batch.segments, rng)
    return {"detection": det, "total": det}, logged


def multimodal_step(state: ModelState, batch: TrainBatch, mode: str = "end_to_end", lam: float = 1.0,
                    rng: Optional[np.random.Generator] = None, box_jitter: float = 0.0,
                    grad_clip: float = 0.0) -> Dict[str, float]:
    """One optimizer update on one batch; returns the loss values."""
    state.model.train()
    state.optimizer.zero_grad(set_to_none=True)
    if batch.modality == RF:
        losses, logged = rf_losses(state.model, batch, mode, lam, rng, box_jitter)
    else:
        losses, logged = skeleton_losses(state.model, batch, rng)
    total = losses["total"]
    if not torch.isfinite(total):
        raise FloatingPointError(f"non-finite loss at step {state.step}")
    total.backward()
    if batch.modality == SKELETON:
        for _, p in state.model.partition(SKELETON_GENERATOR):
            p.grad = None
    state.apply(grad_clip)
    out = {k: float(v.detach()) for k, v in losses.items()}
    out.update(logged)
    return out


def detection_gradients(model: RFActionModel, batch: TrainBatch, mode: str,
                        rng: Optional[np.random.Generator] = None) -> Dict[str, Optional[torch.Tensor]]:
    """Gradient of the detection loss alone on each skeleton_generator parameter."""
    model.zero_grad(set_to_none=True)
    losses, _ = rf_losses(model, batch, mode, 1.0, rng)
    losses["detection"].backward()
    grads = {n: (None if p.grad is None else p.grad.detach().clone()) for n, p in model.partition(SKELETON_GENERATOR)}
    model.zero_grad(set_to_none=True)
    return grads


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % (2 ** 32))


def fit(cfg: TrainConfig, rf_scenes: Sequence[SimulatedScene], skeleton_scenes: Optional[Sequence[SimulatedScene]] = None,
        model: Optional[RFActionModel] = None, log: Optional[Callable[[str], None]] = None,
        on_step: Optional[Callable[[ModelState, Dict[str, float]], None]] = None) -> ModelState:
    """Train for ``cfg.steps`` batches following the alternation schedule."""
    if not rf_scenes:
        raise ValueError("need at least one rf scene")
    seed_everything(cfg.seed)
    model = model or RFActionModel(cfg.model)
    state = ModelState(model, cfg.lr, cfg.momentum, cfg.steps, cfg.optimizer)
    skel = list(rf_scenes if skeleton_scenes is None else skeleton_scenes)
    rng = np.random.default_rng(cfg.seed)
    schedule = alternate_schedule(cfg.ratio, cfg.steps, bool(skel))
    n_frames = cfg.clip_windows * cfg.model.window
    running: Dict[str, List[float]] = {}
    t0 = time.time()
    for kind in schedule:
        if kind == RF:
            batch = rf_batch(rf_scenes[int(rng.integers(len(rf_scenes)))], rng, n_frames)
            if cfg.mirror:
                flips = rng.integers(2, size=2)
                batch = mirror_batch(batch, bool(flips[0]), bool(flips[1]), cfg.model.grid)
        else:
            batch = skeleton_batch(skel[int(rng.integers(len(skel)))], rng, cfg.skeleton_clip)
        values = multimodal_step(state, batch, cfg.mode, cfg.lam, rng, cfg.box_jitter, cfg.grad_clip)
        for k, v in values.items():
            running.setdefault(f"{kind}/{k}", []).append(v)
        if on_step is not None:
            on_step(state, values)
        if log is not None and cfg.log_every and state.step % cfg.log_every == 0:
            parts = " ".join(f"{k}={np.mean(v):.4f}" for k, v in sorted(running.items()))
            log(f"step {state.step} lr={state.current_lr():.5f} t={time.time() - t0:.1f}s {parts}")
            running.clear()
    return state
