from .formats import (
    FormatError,
    format_labels,
    format_vocabulary,
    format_skeleton,
    parse_labels,
    parse_skeleton,
    parse_vocabulary,
    read_label_file,
    read_skeleton_file,
    read_vocabulary_file,
    write_label_file,
    write_skeleton_file,
    write_vocabulary_file,
)
from .segments import interval_iou, pairwise_iou, segment_iou, window_sequence
from .tracking import associate_frames, frames_to_tracks, greedy_pairs, tracks_to_frames
from .types import (
    ACTION,
    DEFAULT_CLASSES,
    FPS,
    INTERACTION,
    JOINT_NAMES,
    N_JOINTS,
    ActionSegment,
    ClassInfo,
    ClassVocabulary,
    Joint,
    SkeletonFrame,
    SkeletonSequence,
    Track,
    torso_centroid,
)

__all__ = [
    "ACTION", "DEFAULT_CLASSES", "FPS", "INTERACTION", "JOINT_NAMES", "N_JOINTS",
    "ActionSegment", "ClassInfo", "ClassVocabulary", "FormatError", "Joint",
    "SkeletonFrame", "SkeletonSequence", "Track",
    "associate_frames", "format_labels", "format_vocabulary", "format_skeleton", "frames_to_tracks", "greedy_pairs",
    "interval_iou", "pairwise_iou", "parse_labels", "parse_skeleton", "parse_vocabulary",
    "read_label_file", "read_skeleton_file", "read_vocabulary_file", "segment_iou",
    "torso_centroid", "tracks_to_frames", "window_sequence", "write_label_file",
    "write_skeleton_file", "write_vocabulary_file",
]
