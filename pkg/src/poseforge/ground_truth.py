"""Keypoint annotations: projections, camera-frame 3D points and visibility labels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import NUM_KEYPOINTS, SkinnedModel

# COCO person keypoint falloff constants, COCO keypoint order
COCO_SIGMAS = np.array(
    [0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
     0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089]
)
DEFAULT_KAPPA = 1.0
DEPTH_TOLERANCE = 0.005  # meters


class SubjectNotVisibleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OksConstants:
    sigmas: np.ndarray = field(default_factory=lambda: COCO_SIGMAS.copy())

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=float)
        if s.shape != (NUM_KEYPOINTS,) or np.any(s <= 0):
            raise ValueError("need 17 positive OKS sigmas")
        object.__setattr__(self, "sigmas", s)


@dataclass(eq=False)
class Annotation:
    keypoints: np.ndarray  # (17, 3): x, y, visibility
    keypoints_3d: np.ndarray  # (17, 3) camera frame, meters
    bbox: tuple  # (x, y, w, h)
    area: float
    image_id: int
    annotation_id: int

    @property
    def visibility(self) -> np.ndarray:
        return self.keypoints[:, 2].astype(int)

    @property
    def num_keypoints(self) -> int:
        return int(np.count_nonzero(self.keypoints[:, 2] > 0))

    def to_coco(self) -> dict:
        kp = []
        for x, y, v in self.keypoints:
            kp += [float(x), float(y), int(v)]
        return {
            "id": int(self.annotation_id),
            "image_id": int(self.image_id),
            "category_id": 1,
            "iscrowd": 0,
            "keypoints": kp,
            "num_keypoints": self.num_keypoints,
            "bbox": [float(b) for b in self.bbox],
            "area": float(self.area),
            "keypoints_3d": [float(c) for c in self.keypoints_3d.ravel()],
        }

    @classmethod
    def from_coco(cls, doc: dict) -> "Annotation":
        kp = np.asarray(doc["keypoints"], dtype=float).reshape(NUM_KEYPOINTS, 3)
        k3 = np.asarray(doc.get("keypoints_3d", [0.0] * 3 * NUM_KEYPOINTS), dtype=float).reshape(-1, 3)
        return cls(kp, k3, tuple(doc["bbox"]), float(doc["area"]), int(doc["image_id"]), int(doc["id"]))

    def __eq__(self, other):
        if not isinstance(other, Annotation):
            return NotImplemented
        return self.to_coco() == other.to_coco()


def keypoint_neighborhood(model: SkinnedModel, oks: OksConstants, kp_index: int,
                          kappa: float = DEFAULT_KAPPA) -> np.ndarray:
    """Rest-pose vertices within kappa * sigma_i * body height of keypoint ``kp_index``.

    Falls back to the single nearest vertex when the ball is empty.
    """
    center = model.rest_keypoints()[kp_index]
    d = np.linalg.norm(model.vertices - center, axis=1)
    radius = kappa * oks.sigmas[kp_index] * model.height
    ids = np.flatnonzero(d <= radius)
    if ids.size == 0:
        ids = np.array([int(np.argmin(d))])
    return ids


def all_neighborhoods(model: SkinnedModel, oks: OksConstants | None = None,
                      kappa: float = DEFAULT_KAPPA) -> list:
    oks = oks or OksConstants()
    key = ("neighborhoods", kappa, tuple(oks.sigmas))
    if key not in model._cache:
        model._cache[key] = [keypoint_neighborhood(model, oks, k, kappa) for k in range(NUM_KEYPOINTS)]
    return model._cache[key]


def _inside(uv: np.ndarray, width: int, height: int) -> np.ndarray:
    return (uv[..., 0] >= 0) & (uv[..., 0] < width) & (uv[..., 1] >= 0) & (uv[..., 1] < height)


def visible_vertices(render, camera, vertices: np.ndarray,
                     tolerance: float = DEPTH_TOLERANCE) -> np.ndarray:
    """Per-vertex visibility: in front, inside the image, and not behind the depth map."""
    uv, z = camera.project(vertices)
    ok = (z > 0) & _inside(uv, camera.width, camera.height)
    vis = np.zeros(len(vertices), dtype=bool)
    idx = np.flatnonzero(ok)
    px = np.floor(uv[idx]).astype(int)
    rendered = render.depth[px[:, 1], px[:, 0]].astype(float)
    vis[idx] = np.isfinite(rendered) & (z[idx] <= rendered + tolerance)
    return vis


def compute_visibility(render, camera, posed_vertices: np.ndarray, neighborhoods,
                       posed_keypoints: np.ndarray, tolerance: float = DEPTH_TOLERANCE) -> np.ndarray:
    """COCO visibility per keypoint: 2 visible, 1 in frame but occluded, 0 out of frame."""
    uv, z = camera.project(posed_keypoints)
    in_frame = (z > 0) & _inside(uv, camera.width, camera.height)
    needed = np.unique(np.concatenate(neighborhoods))
    vis = np.zeros(len(posed_vertices), dtype=bool)
    vis[needed] = visible_vertices(render, camera, posed_vertices[needed], tolerance)
    labels = np.zeros(NUM_KEYPOINTS, dtype=int)
    for k, ids in enumerate(neighborhoods):
        if not in_frame[k]:
            continue
        labels[k] = 2 if vis[ids].any() else 1
    return labels


def build_annotation(render, camera, posed_keypoints: np.ndarray, visibility,
                     image_id: int, annotation_id: int, offset=(0, 0)) -> Annotation:
    """Package one sample; ``offset`` is subtracted from pixel coordinates (crop origin)."""
    if render.bbox is None:
        raise SubjectNotVisibleError("subject not visible")
    uv, _ = camera.project(posed_keypoints)
    vis = np.asarray(visibility, dtype=int)
    xy = uv - np.asarray(offset, dtype=float)
    xy[vis == 0] = 0.0
    kp = np.column_stack([xy, vis.astype(float)])
    k3 = camera.to_camera(posed_keypoints)
    area = float(np.count_nonzero(render.mask))
    return Annotation(kp, k3, tuple(int(b) for b in render.bbox), area, int(image_id), int(annotation_id))
