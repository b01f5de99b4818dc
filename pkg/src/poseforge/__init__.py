"""Synthetic rare-pose / extreme-view humanoid keypoint data.

Sample bounded joint rotations, pose a skinned humanoid, rasterize it from
top or bottom viewpoints and emit COCO keypoint ground truth; evaluate
predictions with OKS average precision; measure pose-space rarity.
"""
from .model import (Skeleton, SkinnedModel, build_template_humanoid, forward_kinematics,
                    load_model, regress_keypoints, rodrigues, save_model, skin_mesh)
from .render import BACKEND, RenderOutput, TextureSpec, mask_and_bbox, rasterize
from .sampler import (Distribution, JointBounds, SamplerConfig, default_anatomical_bounds,
                      sample_angle, sample_pose, scale_bounds)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Distribution", "JointBounds", "RenderOutput", "SamplerConfig", "Skeleton",
    "SkinnedModel", "TextureSpec", "build_template_humanoid", "default_anatomical_bounds",
    "forward_kinematics", "load_model", "mask_and_bbox", "rasterize", "regress_keypoints",
    "rodrigues", "sample_angle", "sample_pose", "save_model", "scale_bounds", "skin_mesh",
]
