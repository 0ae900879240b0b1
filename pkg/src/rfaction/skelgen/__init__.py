from .features import FeatureMaps, FeatureNet
from .network import SkeletonGenerator
from .pose import PoseHead, PoseOutput, person_box
from .rpn import (
    RegionProposal,
    RegionProposalNet,
    box_iou,
    clip_boxes,
    decode,
    encode,
    nms,
    propose_regions,
    rpn_targets,
)
from .softargmax import soft_argmax, soft_argmax_logits, soft_argmax_separable

__all__ = [
    "FeatureMaps", "FeatureNet", "PoseHead", "PoseOutput", "RegionProposal", "RegionProposalNet",
    "SkeletonGenerator", "box_iou", "clip_boxes", "decode", "encode", "nms", "person_box",
    "propose_regions", "rpn_targets", "soft_argmax", "soft_argmax_logits", "soft_argmax_separable",
]
