"""Blend two rigged characters through a shared, animatable unified skeleton."""

from .correspondence import (
    AlphaParams,
    CorrespondencePair,
    PairKind,
    correspond,
    hierarchical_match,
    hungarian,
    post_process,
    splice_override,
    validate_pairs,
)
from .errors import PipelineError, RigMixerError
from .pose import AnimationClip, JointAngles, apply_skinning, transfer_pose
from .skeleton import BoundingBox, Bone, Character, LocalFrame, Mesh, Skeleton, compute_local_frame, segment_mesh
from .unify import BoneKind, UnifiedBone, UnifiedSkeleton, build_unified_skeleton, lerp_box

__version__ = "0.1.0"

__all__ = [
    "AlphaParams",
    "CorrespondencePair",
    "PairKind",
    "correspond",
    "hierarchical_match",
    "hungarian",
    "post_process",
    "splice_override",
    "validate_pairs",
    "PipelineError",
    "RigMixerError",
    "AnimationClip",
    "JointAngles",
    "apply_skinning",
    "transfer_pose",
    "BoundingBox",
    "Bone",
    "Character",
    "LocalFrame",
    "Mesh",
    "Skeleton",
    "compute_local_frame",
    "segment_mesh",
    "BoneKind",
    "UnifiedBone",
    "UnifiedSkeleton",
    "build_unified_skeleton",
    "lerp_box",
]
