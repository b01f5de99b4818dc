"""Extreme-view viewpoint sampling, pinhole cameras and background compositing."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

DISTANCE_RANGE = (2.5, 4.5)  # in body heights
DEFAULT_LATITUDE_SIGMA = 15.0
DEFAULT_FOV = 50.0
DEFAULT_CROP_FACTOR = 1.25


class ViewMode(str, enum.Enum):
    TOP = "Top"
    BOTTOM = "Bottom"
    TOP_BOTTOM_MIX = "TopBottomMix"
    ORBITAL = "Orbital"


@dataclass(frozen=True)
class Viewpoint:
    latitude: float  # degrees, +90 looks straight down at the subject
    longitude: float  # degrees in [-180, 180)
    distance: float  # meters

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not self.distance > 0:
            raise ValueError("distance must be positive")


@dataclass(frozen=True)
class ViewDistribution:
    mode: ViewMode = ViewMode.TOP_BOTTOM_MIX
    latitude_sigma: float = DEFAULT_LATITUDE_SIGMA
    distance_range: tuple = DISTANCE_RANGE

    def __post_init__(self):
        object.__setattr__(self, "mode", ViewMode(self.mode))
        if not self.latitude_sigma > 0:
            raise ValueError("latitude_sigma must be positive")


def _fold_latitude(lat: float) -> float:
    # walking past a pole continues down the other side of the sphere
    lat = (lat + 90.0) % 360.0 - 90.0
    if lat > 90.0:
        lat = 180.0 - lat
    return lat


def sample_viewpoint(dist: ViewDistribution, rng: np.random.Generator,
                     body_height: float = 1.0) -> Viewpoint:
    """Longitude uniform; latitude normal around the mode's pole; distance in body heights."""
    if dist.mode is ViewMode.TOP:
        center = 90.0
    elif dist.mode is ViewMode.BOTTOM:
        center = -90.0
    elif dist.mode is ViewMode.ORBITAL:
        center = 0.0
    else:
        center = 90.0 if rng.random() < 0.5 else -90.0
    lat = _fold_latitude(center + dist.latitude_sigma * rng.standard_normal())
    lon = -180.0 + 360.0 * rng.random()
    lo, hi = dist.distance_range
    distance = body_height * (lo + (hi - lo) * rng.random())
    return Viewpoint(lat, lon, distance)


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera. ``rotation`` rows are the camera x (right), y (down) and
    z (forward) axes in world coordinates."""

    position: np.ndarray
    rotation: np.ndarray
    focal_length_px: float
    principal_point: tuple
    image_size: tuple  # (width, height)

    def __post_init__(self):
        if not self.focal_length_px > 0:
            raise ValueError("focal length must be positive")
        w, h = self.image_size
        cx, cy = self.principal_point
        if not (0 <= cx <= w and 0 <= cy <= h):
            raise ValueError("principal point outside the image")

    @property
    def width(self) -> int:
        return int(self.image_size[0])

    @property
    def height(self) -> int:
        return int(self.image_size[1])

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.position) @ self.rotation.T

    def project_camera(self, cam_points: np.ndarray):
        """Pixel coordinates and depth of camera-frame points."""
        z = cam_points[..., 2]
        cx, cy = self.principal_point
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.focal_length_px * cam_points[..., 0] / z + cx
            v = self.focal_length_px * cam_points[..., 1] / z + cy
        return np.stack([u, v], axis=-1), z

    def project(self, points: np.ndarray):
        return self.project_camera(self.to_camera(points))

    def to_json(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "rotation": [[float(x) for x in row] for row in self.rotation],
            "focal_length_px": float(self.focal_length_px),
            "principal_point": [float(x) for x in self.principal_point],
            "image_size": [int(x) for x in self.image_size],
        }


def look_at_rotation(position, target) -> np.ndarray:
    forward = np.asarray(target, float) - np.asarray(position, float)
    forward /= np.linalg.norm(forward)
    world_up = np.array([0.0, 0.0, 1.0])
    up = world_up - (world_up @ forward) * forward
    if np.linalg.norm(up) < 1e-9:
        # looking straight up or down: fixed fallback
        fallback = np.array([0.0, 1.0, 0.0])
        up = fallback - (fallback @ forward) * forward
    up /= np.linalg.norm(up)
    right = np.cross(forward, up)
    down = -up
    return np.stack([right, down, forward])


def make_camera(viewpoint: Viewpoint, subject_center, image_size=(256, 256),
                fov_deg: float = DEFAULT_FOV) -> Camera:
    if not 10.0 < fov_deg < 120.0:
        raise ValueError("fov_deg must be in (10, 120)")
    lat, lon = math.radians(viewpoint.latitude), math.radians(viewpoint.longitude)
    direction = np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])
    center = np.asarray(subject_center, dtype=float)
    position = center + viewpoint.distance * direction
    w, h = int(image_size[0]), int(image_size[1])
    focal = (w / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return Camera(position, look_at_rotation(position, center), focal, (w / 2.0, h / 2.0), (w, h))


def project_point(camera: Camera, point):
    """(pixel xy, depth) of a world point; negative depth means behind the camera."""
    uv, z = camera.project(np.asarray(point, dtype=float).reshape(1, 3))
    return uv[0], float(z[0])


# ---------------------------------------------------------------------------
# compositing


class EmptyRenderError(ValueError):
    pass


def crop_window(bbox, crop_factor: float, image_size) -> tuple:
    """(x0, y0, x1, y1) of a crop_factor-scaled window centered on ``bbox``,
    intersected with the image."""
    x, y, w, h = bbox
    cw = int(math.floor(crop_factor * w + 0.5))
    ch = int(math.floor(crop_factor * h + 0.5))
    x0 = x + (w - cw) // 2
    y0 = y + (h - ch) // 2
    W, H = image_size
    return max(0, x0), max(0, y0), min(W, x0 + cw), min(H, y0 + ch)


def resize_cover(image: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbour scale so the image covers width x height, then center-crop."""
    bh, bw = image.shape[:2]
    scale = max(width / bw, height / bh)
    sw, sh = max(width, int(math.ceil(bw * scale))), max(height, int(math.ceil(bh * scale)))
    ox, oy = (sw - width) // 2, (sh - height) // 2
    xs = np.minimum(((np.arange(width) + ox + 0.5) / scale).astype(int), bw - 1)
    ys = np.minimum(((np.arange(height) + oy + 0.5) / scale).astype(int), bh - 1)
    return image[ys[:, None], xs[None, :]]


def composite(render, background: np.ndarray | None) -> np.ndarray:
    """Full-frame composite: mask pixels from the render, others from the background."""
    H, W = render.mask.shape
    if background is None:
        return render.rgb.copy()
    bg = resize_cover(np.asarray(background, dtype=np.uint8), W, H)
    return np.where(render.mask[..., None], render.rgb, bg)


def compose_and_crop(render, background: np.ndarray | None,
                     crop_factor: float = DEFAULT_CROP_FACTOR) -> np.ndarray:
    if render.bbox is None:
        raise EmptyRenderError("no subject rendered")
    H, W = render.mask.shape
    x0, y0, x1, y1 = crop_window(render.bbox, crop_factor, (W, H))
    return composite(render, background)[y0:y1, x0:x1]
