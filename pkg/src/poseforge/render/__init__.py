"""Software rasterizer producing RGB, depth, mask and bounding box.

The triangle kernel comes from the compiled ``_raster_ext`` module when it is
importable and from the numpy implementation otherwise.  Set
``POSEFORGE_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

from . import _raster_py

try:
    from . import _raster_ext
except ImportError:  # extension not built
    _raster_ext = None

NEAR_PLANE = 0.01
AMBIENT = 0.3
# direction towards the light, camera frame (x right, y down, z forward)
LIGHT_DIR = np.array([-0.4, -0.6, -0.7]) / np.linalg.norm([-0.4, -0.6, -0.7])

SKIN_PALETTE = (
    (255, 224, 196), (241, 194, 167), (224, 172, 138), (198, 134, 103),
    (173, 110, 80), (141, 85, 62), (110, 66, 48), (85, 51, 38),
    (234, 190, 150), (160, 110, 75),
)

KERNELS = {"python": _raster_py.rasterize_triangles}
if _raster_ext is not None:
    KERNELS["ext"] = _raster_ext.rasterize_triangles


def _select_backend() -> str:
    wanted = os.environ.get("POSEFORGE_BACKEND", "auto").lower()
    if wanted == "python" or "ext" not in KERNELS:
        return "python"
    return "ext"


BACKEND = _select_backend()


def rasterize_triangles(xy, invz, width, height, backend: str | None = None):
    """Raw kernel: screen-space triangles -> (depth, triangle id, perspective barycentrics)."""
    fn = KERNELS[backend or BACKEND]
    xy = np.ascontiguousarray(xy, dtype=np.float64).reshape(-1, 3, 2)
    invz = np.ascontiguousarray(invz, dtype=np.float64).reshape(-1, 3)
    return fn(xy, invz, int(width), int(height))


class TextureKind(str, enum.Enum):
    SKIN_TONE = "SkinTone"
    PROCEDURAL = "Procedural"
    IMAGE_UV = "ImageUV"


@dataclass(frozen=True, eq=False)
class TextureSpec:
    kind: TextureKind = TextureKind.SKIN_TONE
    skin_tone: tuple = SKIN_PALETTE[2]
    image: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", TextureKind(self.kind))
        if self.kind is TextureKind.IMAGE_UV and self.image is None:
            raise ValueError("ImageUV texture needs an image")


@dataclass(frozen=True, eq=False)
class RenderOutput:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float32, +inf where empty
    mask: np.ndarray  # (H, W) bool
    bbox: tuple | None  # (x, y, w, h) or None when empty
    triangle_ids: np.ndarray | None = None  # (H, W) source triangle per pixel, -1 empty

    def crop(self, window) -> "RenderOutput":
        x0, y0, x1, y1 = window
        mask = self.mask[y0:y1, x0:x1]
        _, bbox = mask_and_bbox(self.depth[y0:y1, x0:x1])
        ids = None if self.triangle_ids is None else self.triangle_ids[y0:y1, x0:x1]
        return RenderOutput(self.rgb[y0:y1, x0:x1], self.depth[y0:y1, x0:x1], mask, bbox, ids)


def mask_and_bbox(depth: np.ndarray):
    """Mask of finite-depth pixels and its tight (x, y, w, h) box (None if empty)."""
    mask = np.isfinite(depth)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return mask, None
    cols = np.flatnonzero(mask.any(axis=0))
    x, y = int(cols[0]), int(rows[0])
    return mask, (x, y, int(cols[-1]) - x + 1, int(rows[-1]) - y + 1)


def _clip_polygon(points: np.ndarray, near: float):
    """Sutherland-Hodgman clip of a camera-space triangle against z >= near.

    Returns the kept polygon as rows of barycentric weights over the input
    vertices.
    """
    weights = np.eye(3)
    out = []
    for k in range(3):
        a, b = k, (k + 1) % 3
        za, zb = points[a, 2], points[b, 2]
        a_in, b_in = za >= near, zb >= near
        if a_in:
            out.append(weights[a])
        if a_in != b_in:
            s = (near - za) / (zb - za)
            out.append((1.0 - s) * weights[a] + s * weights[b])
    return np.array(out)


def _prepare(cam_vertices, triangles, camera, near):
    tz = cam_vertices[triangles][:, :, 2]
    behind = tz < near
    n_behind = behind.sum(axis=1)
    full = np.flatnonzero(n_behind == 0)
    pts = [cam_vertices[triangles[full]]]
    src = [full]
    bary_maps = {}
    for t in np.flatnonzero((n_behind > 0) & (n_behind < 3)):
        tri_pts = cam_vertices[triangles[t]]
        poly = _clip_polygon(tri_pts, near)
        for k in range(1, len(poly) - 1):
            m = np.stack([poly[0], poly[k], poly[k + 1]])
            bary_maps[sum(len(s) for s in src)] = m
            pts.append((m @ tri_pts)[None])
            src.append(np.array([t]))
    pts = np.concatenate(pts) if pts else np.zeros((0, 3, 3))
    src = np.concatenate(src).astype(np.int64)
    return pts, src, bary_maps


def vertex_albedo(model, texture: TextureSpec) -> np.ndarray:
    """Per-vertex albedo in [0, 1] for the colour-based texture kinds."""
    V = model.num_vertices
    if texture.kind is TextureKind.SKIN_TONE:
        return np.tile(np.asarray(texture.skin_tone, float) / 255.0, (V, 1))
    if texture.kind is TextureKind.PROCEDURAL:
        from ..model import JOINT_INDEX

        rng = np.random.default_rng(texture.seed)
        shirt = rng.integers(30, 226, 3) / 255.0
        pants = rng.integers(20, 160, 3) / 255.0
        shoes = rng.integers(10, 70, 3) / 255.0
        skin = np.asarray(texture.skin_tone, float) / 255.0
        colors = np.where((model.vertices[:, 2] >= 0.0)[:, None], shirt, pants)
        owner = model.weight_joints[np.arange(V), np.argmax(model.weight_values, axis=1)]
        skin_joints = [JOINT_INDEX[n] for n in ("head", "neck", "left_wrist", "right_wrist")]
        shoe_joints = [JOINT_INDEX[n] for n in ("left_ankle", "right_ankle", "left_foot", "right_foot")]
        colors[np.isin(owner, skin_joints)] = skin
        colors[np.isin(owner, shoe_joints)] = shoes
        return colors
    raise ValueError("ImageUV textures are sampled per pixel, not per vertex")


def rasterize(vertices, triangles, camera, texture: TextureSpec | None = None, *,
              model=None, albedo=None, near: float = NEAR_PLANE,
              backend: str | None = None) -> RenderOutput:
    """Rasterize posed triangles with a z-buffer and flat Lambert shading.

    ``albedo`` (per-vertex colours in [0, 1]) overrides ``texture``; the
    Procedural and ImageUV kinds need ``model`` for joint ownership or uv.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    W, H = camera.width, camera.height
    texture = texture or TextureSpec()

    cam_v = camera.to_camera(vertices)
    pts, src, bary_maps = _prepare(cam_v, triangles, camera, near)
    xy, z = camera.project_camera(pts)
    zbuf, tid, bary = rasterize_triangles(xy, 1.0 / z, W, H, backend=backend)

    mask = tid >= 0
    depth = zbuf.astype(np.float32)
    depth[~mask] = np.inf
    src_ids = np.full(tid.shape, -1, dtype=np.int64)
    src_ids[mask] = src[tid[mask]]

    rgb = np.zeros((H, W, 3), dtype=np.uint8)
    if mask.any():
        sub = tid[mask]
        b = bary[mask]
        if bary_maps:
            for k, m in bary_maps.items():
                hit = sub == k
                if hit.any():
                    b[hit] = b[hit] @ m
        face = src_ids[mask]
        tri_v = triangles[face]

        p = cam_v[triangles]
        normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        norm = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = normals / np.where(norm > 0, norm, 1.0)
        facing = np.einsum("ij,ij->i", normals, -p.mean(axis=1))
        normals[facing < 0] *= -1.0
        shade = np.minimum(1.0, AMBIENT + np.maximum(0.0, normals @ LIGHT_DIR))[face]

        if albedo is not None:
            colors = np.einsum("pk,pkc->pc", b, np.asarray(albedo, float)[tri_v])
        elif texture.kind is TextureKind.IMAGE_UV:
            if model is None or model.uv is None:
                raise ValueError("ImageUV texture needs a model with uv coordinates")
            uv = np.einsum("pk,pkc->pc", b, model.uv[tri_v])
            img = np.asarray(texture.image)
            th, tw = img.shape[:2]
            ui = np.clip((uv[:, 0] * tw).astype(int), 0, tw - 1)
            vi = np.clip(((1.0 - uv[:, 1]) * th).astype(int), 0, th - 1)
            colors = img[vi, ui, :3] / 255.0
        elif texture.kind is TextureKind.SKIN_TONE:
            colors = np.tile(np.asarray(texture.skin_tone, float) / 255.0, (len(face), 1))
        else:
            if model is None:
                raise ValueError("Procedural texture needs the model")
            colors = np.einsum("pk,pkc->pc", b, vertex_albedo(model, texture)[tri_v])
        rgb[mask] = np.clip(np.rint(255.0 * colors * shade[:, None]), 0, 255).astype(np.uint8)

    _, bbox = mask_and_bbox(depth)
    return RenderOutput(rgb, depth, mask, bbox, src_ids)
