from .checkpoint import (
    load_model,
    load_state,
    pack_checkpoint,
    read_checkpoint,
    save_state,
    unpack_checkpoint,
    write_checkpoint,
)
from .config import MODES, TrainConfig, load_train_config, save_train_config
from .data import RF, SKELETON, TrainBatch, alternate_schedule, clip_segments, mirror_batch, rf_batch, rotate_scene, scene_joints, skeleton_batch
from .losses import DetectionTargets, greedy_match, loss_detection, loss_skeleton, rpn_loss, smooth_l1
from .loop import (
    detection_gradients,
    detection_loss,
    fit,
    generator_forward,
    multimodal_step,
    rf_losses,
    seed_everything,
    skeleton_losses,
    slot_targets,
)
from .state import ModelState, cosine_factor

__all__ = [
    "MODES", "RF", "SKELETON", "DetectionTargets", "ModelState", "TrainBatch", "TrainConfig",
    "alternate_schedule", "clip_segments", "cosine_factor", "detection_gradients", "detection_loss", "fit",
    "generator_forward", "greedy_match", "load_model", "load_state", "load_train_config", "loss_detection", "mirror_batch",
    "loss_skeleton", "multimodal_step", "pack_checkpoint", "read_checkpoint", "rf_batch", "rf_losses",
    "rotate_scene", "rpn_loss", "save_state", "save_train_config", "scene_joints", "seed_everything",
    "skeleton_batch", "skeleton_losses", "slot_targets", "smooth_l1", "unpack_checkpoint", "write_checkpoint",
]
