"""Skinned articulated body model: skeleton, template mesh, kinematics and skinning.

World frame is z-up; the template faces +y and its left side is at -x.
Joint transforms are expressed relative to the rest pose, so identity
transforms reproduce the rest mesh.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1
MAX_INFLUENCES = 4
NUM_KEYPOINTS = 17

COCO_KEYPOINT_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

# 1-based pairs, as in the COCO person category
COCO_SKELETON = (
    (16, 14), (14, 12), (17, 15), (15, 13), (12, 13), (6, 12), (7, 13),
    (6, 7), (6, 8), (7, 9), (8, 10), (9, 11), (2, 3), (1, 2), (1, 3),
    (2, 4), (3, 5), (4, 6), (5, 7),
)

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}

_PARENT_NAMES = {
    "left_hip": "pelvis", "right_hip": "pelvis", "spine1": "pelvis",
    "left_knee": "left_hip", "right_knee": "right_hip", "spine2": "spine1",
    "left_ankle": "left_knee", "right_ankle": "right_knee",
    "left_foot": "left_ankle", "right_foot": "right_ankle",
    "neck": "spine2", "left_collar": "spine2", "right_collar": "spine2",
    "head": "neck", "left_shoulder": "left_collar", "right_shoulder": "right_collar",
    "left_elbow": "left_shoulder", "right_elbow": "right_shoulder",
    "left_wrist": "left_elbow", "right_wrist": "right_elbow",
}


class ModelError(ValueError):
    """Raised for malformed or invalid model files."""


class ModelParseError(ModelError):
    pass


class ModelValidationError(ModelError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True, eq=False)
class Skeleton:
    joint_names: tuple
    parents: np.ndarray  # (J,) int, -1 for the root
    rest_positions: np.ndarray  # (J, 3) meters

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    def bone_lengths(self, positions: np.ndarray | None = None) -> np.ndarray:
        pos = self.rest_positions if positions is None else positions
        child = np.arange(1, self.joint_count)
        return np.linalg.norm(pos[child] - pos[self.parents[child]], axis=1)

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return (
            tuple(self.joint_names) == tuple(other.joint_names)
            and np.array_equal(self.parents, other.parents)
            and np.array_equal(self.rest_positions, other.rest_positions)
        )


@dataclass(frozen=True, eq=False)
class KeypointSource:
    """A COCO keypoint slot bound either to a joint or to a weighted vertex set."""

    joint: int | None = None
    vertices: tuple = ()  # ((vertex_index, weight), ...)

    def to_json(self) -> dict:
        if self.joint is not None:
            return {"joint": int(self.joint)}
        return {"vertices": [[int(i), float(w)] for i, w in self.vertices]}

    def __eq__(self, other):
        if not isinstance(other, KeypointSource):
            return NotImplemented
        return self.to_json() == other.to_json()


@dataclass(frozen=True, eq=False)
class SkinnedModel:
    skeleton: Skeleton
    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (T, 3) int
    weight_joints: np.ndarray  # (V, 4) int, padded with 0
    weight_values: np.ndarray  # (V, 4) float, padded with 0.0
    keypoint_map: tuple  # 17 KeypointSource
    uv: np.ndarray | None = None  # (V, 2)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def height(self) -> float:
        """Vertical extent of the rest mesh."""
        z = self.vertices[:, 2]
        return float(z.max() - z.min())

    def skin_weights(self) -> list:
        """Sparse per-vertex [(joint, weight), ...] lists."""
        out = []
        for js, ws in zip(self.weight_joints, self.weight_values):
            out.append([(int(j), float(w)) for j, w in zip(js, ws) if w > 0.0])
        return out

    def rest_keypoints(self) -> np.ndarray:
        if "rest_keypoints" not in self._cache:
            self._cache["rest_keypoints"] = regress_keypoints(
                self, identity_transforms(self.skeleton.joint_count)
            )
        return self._cache["rest_keypoints"]

    def __eq__(self, other):
        if not isinstance(other, SkinnedModel):
            return NotImplemented
        if (self.uv is None) != (other.uv is None):
            return False
        return (
            self.skeleton == other.skeleton
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.weight_joints, other.weight_joints)
            and np.array_equal(self.weight_values, other.weight_values)
            and tuple(self.keypoint_map) == tuple(other.keypoint_map)
            and (self.uv is None or np.array_equal(self.uv, other.uv))
        )


@dataclass(frozen=True, eq=False)
class JointTransforms:
    """Per-joint rigid transforms relative to the rest pose: p' = R p + t."""

    rotations: np.ndarray  # (J, 3, 3)
    translations: np.ndarray  # (J, 3)

    def __len__(self) -> int:
        return len(self.rotations)

    def apply(self, joint: int, points: np.ndarray) -> np.ndarray:
        return points @ self.rotations[joint].T + self.translations[joint]

    def joint_positions(self, skeleton: Skeleton) -> np.ndarray:
        rest = skeleton.rest_positions
        return np.einsum("jab,jb->ja", self.rotations, rest) + self.translations

    def translated(self, offset) -> "JointTransforms":
        return JointTransforms(self.rotations, self.translations + np.asarray(offset, float))


def identity_transforms(joint_count: int) -> JointTransforms:
    return JointTransforms(np.tile(np.eye(3), (joint_count, 1, 1)), np.zeros((joint_count, 3)))


# ---------------------------------------------------------------------------
# rotations and kinematics


def rodrigues(axis_angle) -> np.ndarray:
    """Exponential map from an axis-angle 3-vector to a rotation matrix."""
    return rodrigues_batch(np.asarray(axis_angle, dtype=float).reshape(1, 3))[0]


def rodrigues_batch(axis_angles: np.ndarray) -> np.ndarray:
    v = np.asarray(axis_angles, dtype=float).reshape(-1, 3)
    theta = np.linalg.norm(v, axis=1)
    n = len(v)
    K = np.zeros((n, 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -v[:, 2], v[:, 1]
    K[:, 1, 0], K[:, 1, 2] = v[:, 2], -v[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -v[:, 1], v[:, 0]
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    # sin(t)/t and (1-cos(t))/t^2, Taylor-expanded near zero
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    KK = K @ K
    return np.eye(3) + a[:, None, None] * K + b[:, None, None] * KK


def _pose_matrix(pose, joint_count: int) -> np.ndarray:
    p = np.asarray(pose, dtype=float)
    if p.size != 3 * joint_count:
        raise ValueError(f"pose must have {joint_count} x 3 entries, got {p.size}")
    return p.reshape(joint_count, 3)


def forward_kinematics(skeleton: Skeleton, pose) -> JointTransforms:
    """Compose per-joint local rotations (about each rest joint) down the chain.

    The root rotates about its own rest position, so its translation stays fixed.
    """
    J = skeleton.joint_count
    local = rodrigues_batch(_pose_matrix(pose, J))
    rest = skeleton.rest_positions
    parents = skeleton.parents
    R = np.empty((J, 3, 3))
    t = np.empty((J, 3))
    for j in range(J):
        Rl = local[j]
        c = rest[j]
        pivot = c - Rl @ c
        p = parents[j]
        if p < 0:
            R[j] = Rl
            t[j] = pivot
        else:
            R[j] = R[p] @ Rl
            t[j] = R[p] @ pivot + t[p]
    return JointTransforms(R, t)


def skin_mesh(model: SkinnedModel, transforms: JointTransforms, vertex_ids=None) -> np.ndarray:
    """Linear blend skinning; optionally restricted to a subset of vertices."""
    if vertex_ids is None:
        verts, wj, wv = model.vertices, model.weight_joints, model.weight_values
    else:
        verts = model.vertices[vertex_ids]
        wj, wv = model.weight_joints[vertex_ids], model.weight_values[vertex_ids]
    out = np.zeros_like(verts, dtype=float)
    R, t = transforms.rotations, transforms.translations
    for k in range(wj.shape[1]):
        w = wv[:, k]
        if not np.any(w):
            continue
        j = wj[:, k]
        moved = np.einsum("vab,vb->va", R[j], verts) + t[j]
        out += w[:, None] * moved
    return out


def regress_keypoints(model: SkinnedModel, transforms: JointTransforms,
                      posed_vertices: np.ndarray | None = None) -> np.ndarray:
    """Posed 3D positions of the 17 COCO keypoints, in COCO order."""
    skel = model.skeleton
    joints = transforms.joint_positions(skel)
    out = np.empty((NUM_KEYPOINTS, 3))
    for k, src in enumerate(model.keypoint_map):
        if src.joint is not None:
            out[k] = joints[src.joint]
            continue
        ids = np.array([i for i, _ in src.vertices], dtype=int)
        w = np.array([w for _, w in src.vertices], dtype=float)
        pts = posed_vertices[ids] if posed_vertices is not None else skin_mesh(model, transforms, ids)
        out[k] = w @ pts
    return out


# ---------------------------------------------------------------------------
# procedural template


def _capsule(p0, p1, radius, n_around=16, n_cap=4, n_body=4):
    """Closed capsule mesh around the segment p0-p1 with outward winding.

    Returns vertices, triangles and the axial parameter of each vertex,
    clamped to [0, 1] (0 at p0, 1 at p1).
    """
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    axis = p1 - p0
    length = float(np.linalg.norm(axis))
    a = axis / length
    helper = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, a)
    u /= np.linalg.norm(u)
    v = np.cross(a, u)

    rings = []  # (center, ring radius)
    for i in range(1, n_cap + 1):
        phi = -math.pi / 2 + i * (math.pi / 2) / n_cap
        rings.append((p0 + a * radius * math.sin(phi), radius * math.cos(phi)))
    for i in range(1, n_body + 1):
        rings.append((p0 + axis * (i / n_body), radius))
    for i in range(1, n_cap):
        phi = i * (math.pi / 2) / n_cap
        rings.append((p1 + a * radius * math.sin(phi), radius * math.cos(phi)))

    ang = 2 * math.pi * np.arange(n_around) / n_around
    dirs = np.outer(np.cos(ang), u) + np.outer(np.sin(ang), v)
    verts = [p0 - a * radius]
    for center, r in rings:
        verts.extend(center + r * dirs)
    verts.append(p1 + a * radius)
    verts = np.array(verts)

    tris = []
    last = len(verts) - 1
    for i in range(n_around):
        i2 = (i + 1) % n_around
        tris.append((0, 1 + i2, 1 + i))
    for k in range(len(rings) - 1):
        lo, hi = 1 + k * n_around, 1 + (k + 1) * n_around
        for i in range(n_around):
            i2 = (i + 1) % n_around
            tris.append((lo + i, lo + i2, hi + i2))
            tris.append((lo + i, hi + i2, hi + i))
    top = 1 + (len(rings) - 1) * n_around
    for i in range(n_around):
        i2 = (i + 1) % n_around
        tris.append((top + i, top + i2, last))

    param = np.clip((verts - p0) @ a / length, 0.0, 1.0)
    return verts, np.array(tris, dtype=np.int64), param


_REST = {
    "pelvis": (0.0, 0.0, 0.0),
    "spine1": (0.0, 0.0, 0.10),
    "spine2": (0.0, 0.0, 0.26),
    "neck": (0.0, 0.0, 0.46),
    "head": (0.0, 0.0, 0.58),
}
for _side, _sx in (("left", -1.0), ("right", 1.0)):
    _REST.update({
        f"{_side}_hip": (0.09 * _sx, 0.0, -0.08),
        f"{_side}_knee": (0.09 * _sx, 0.0, -0.49),
        f"{_side}_ankle": (0.09 * _sx, 0.0, -0.89),
        f"{_side}_foot": (0.09 * _sx, 0.10, -0.94),
        f"{_side}_collar": (0.06 * _sx, 0.0, 0.44),
        f"{_side}_shoulder": (0.17 * _sx, 0.0, 0.44),
        f"{_side}_elbow": (0.44 * _sx, 0.0, 0.44),
        f"{_side}_wrist": (0.69 * _sx, 0.0, 0.44),
    })


def _template_capsules():
    """(owner, p0, p1, radius, blend joint at p0, blend joint at p1)."""
    R = _REST
    caps = [
        ("pelvis", (-0.09, 0.0, -0.06), (0.09, 0.0, -0.06), 0.10, None, None),
        ("spine1", (0.0, 0.0, 0.04), (0.0, 0.0, 0.26), 0.11, "pelvis", "spine2"),
        ("spine2", (0.0, 0.0, 0.26), (0.0, 0.0, 0.42), 0.12, "spine1", None),
        ("spine2", (-0.12, 0.0, 0.42), (0.12, 0.0, 0.42), 0.08, None, None),
        ("neck", (0.0, 0.0, 0.46), (0.0, 0.0, 0.58), 0.05, "spine2", "head"),
        ("head", (0.0, 0.0, 0.66), (0.0, 0.0, 0.74), 0.105, None, None),
    ]
    for s, sx in (("left", -1.0), ("right", 1.0)):
        caps += [
            (f"{s}_collar", R[f"{s}_collar"], R[f"{s}_shoulder"], 0.055, None, f"{s}_shoulder"),
            (f"{s}_shoulder", R[f"{s}_shoulder"], R[f"{s}_elbow"], 0.05, f"{s}_collar", f"{s}_elbow"),
            (f"{s}_elbow", R[f"{s}_elbow"], R[f"{s}_wrist"], 0.042, f"{s}_shoulder", f"{s}_wrist"),
            (f"{s}_wrist", R[f"{s}_wrist"], (0.83 * sx, 0.0, 0.44), 0.035, f"{s}_elbow", None),
            (f"{s}_hip", R[f"{s}_hip"], R[f"{s}_knee"], 0.075, "pelvis", f"{s}_knee"),
            (f"{s}_knee", R[f"{s}_knee"], R[f"{s}_ankle"], 0.055, f"{s}_hip", f"{s}_ankle"),
            (f"{s}_ankle", (0.09 * sx, -0.02, -0.92), R[f"{s}_foot"], 0.04, f"{s}_knee", f"{s}_foot"),
            (f"{s}_foot", R[f"{s}_foot"], (0.09 * sx, 0.17, -0.95), 0.03, f"{s}_ankle", None),
        ]
    return caps


# face keypoint anchors on the head capsule; each uses its 3 nearest vertices
_FACE_ANCHORS = {
    "nose": (0.0, 0.105, 0.69),
    "left_eye": (-0.035, 0.095, 0.72),
    "right_eye": (0.035, 0.095, 0.72),
    "left_ear": (-0.105, 0.0, 0.70),
    "right_ear": (0.105, 0.0, 0.70),
}
_BLEND_SPAN = 0.25


def build_template_humanoid() -> SkinnedModel:
    """Deterministic capsule humanoid with the 21-joint body topology."""
    parents = np.array(
        [-1] + [JOINT_INDEX[_PARENT_NAMES[n]] for n in JOINT_NAMES[1:]], dtype=np.int64
    )
    rest = np.array([_REST[n] for n in JOINT_NAMES], dtype=float)
    skeleton = Skeleton(JOINT_NAMES, parents, rest)

    all_v, all_t, wj, wv = [], [], [], []
    head_range = None
    offset = 0
    for owner, p0, p1, radius, blend0, blend1 in _template_capsules():
        verts, tris, param = _capsule(p0, p1, radius)
        n = len(verts)
        js = np.zeros((n, MAX_INFLUENCES), dtype=np.int64)
        ws = np.zeros((n, MAX_INFLUENCES))
        js[:, 0] = JOINT_INDEX[owner]
        ws[:, 0] = 1.0
        if blend0 is not None:
            share = 0.5 * np.clip(1.0 - param / _BLEND_SPAN, 0.0, 1.0)
            js[:, 1] = JOINT_INDEX[blend0]
            ws[:, 1] = share
            ws[:, 0] -= share
        if blend1 is not None:
            share = 0.5 * np.clip((param - (1.0 - _BLEND_SPAN)) / _BLEND_SPAN, 0.0, 1.0)
            js[:, 2] = JOINT_INDEX[blend1]
            ws[:, 2] = share
            ws[:, 0] -= share
        if owner == "head":
            head_range = (offset, offset + n)
        all_v.append(verts)
        all_t.append(tris + offset)
        wj.append(js)
        wv.append(ws)
        offset += n

    vertices = np.concatenate(all_v)
    triangles = np.concatenate(all_t)
    weight_joints = np.concatenate(wj)
    weight_values = np.concatenate(wv)
    # canonical layout: nonzero influences first, empty slots (joint 0, weight 0) last
    order = np.argsort(weight_values == 0.0, axis=1, kind="stable")
    weight_joints = np.take_along_axis(weight_joints, order, axis=1)
    weight_values = np.take_along_axis(weight_values, order, axis=1)
    weight_joints[weight_values == 0.0] = 0

    zmin, zmax = vertices[:, 2].min(), vertices[:, 2].max()
    ang = np.arctan2(vertices[:, 1], vertices[:, 0])
    uv = np.stack([(ang + math.pi) / (2 * math.pi), (vertices[:, 2] - zmin) / (zmax - zmin)], axis=1)
    uv = np.clip(uv, 0.0, 1.0)

    head_ids = np.arange(*head_range)
    kp = []
    for name in COCO_KEYPOINT_NAMES:
        if name in _FACE_ANCHORS:
            d = np.linalg.norm(vertices[head_ids] - np.array(_FACE_ANCHORS[name]), axis=1)
            nearest = head_ids[np.argsort(d, kind="stable")[:3]]
            kp.append(KeypointSource(vertices=tuple((int(i), 1.0 / 3.0) for i in nearest)))
        else:
            kp.append(KeypointSource(joint=JOINT_INDEX[name]))

    return SkinnedModel(skeleton, vertices, triangles, weight_joints, weight_values, tuple(kp), uv)


# ---------------------------------------------------------------------------
# file format


def model_to_json(model: SkinnedModel) -> dict:
    sk = model.skeleton
    doc = {
        "format_version": FORMAT_VERSION,
        "joint_names": list(sk.joint_names),
        "parents": [int(p) for p in sk.parents],
        "rest_positions": [float(x) for x in sk.rest_positions.ravel()],
        "vertices": [float(x) for x in model.vertices.ravel()],
        "triangles": [int(i) for i in model.triangles.ravel()],
        "skin_weights": [[[j, w] for j, w in vw] for vw in model.skin_weights()],
        "keypoint_map": [src.to_json() for src in model.keypoint_map],
    }
    if model.uv is not None:
        doc["uv"] = [float(x) for x in model.uv.ravel()]
    return doc


def save_model(model: SkinnedModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model)))


def load_model(path) -> SkinnedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_json(doc)


def _flat(doc, key, width, dtype):
    if key not in doc:
        raise ModelValidationError(key, "missing")
    try:
        arr = np.asarray(doc[key], dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise ModelValidationError(key, f"not a numeric array ({exc})") from exc
    if arr.ndim != 1 or arr.size % width:
        raise ModelValidationError(key, f"length must be a multiple of {width}")
    return arr.reshape(-1, width)


def model_from_json(doc: dict) -> SkinnedModel:
    if not isinstance(doc, dict):
        raise ModelParseError("model document must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelValidationError("format_version", f"expected {FORMAT_VERSION}")

    names = doc.get("joint_names")
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ModelValidationError("joint_names", "must be a list of strings")
    parents = np.asarray(doc.get("parents", []), dtype=np.int64)
    J = len(names)
    if parents.shape != (J,):
        raise ModelValidationError("parents", f"expected {J} entries")
    rest = _flat(doc, "rest_positions", 3, float)
    if len(rest) != J:
        raise ModelValidationError("rest_positions", f"expected {J} points")
    _validate_tree(parents, rest)
    skeleton = Skeleton(tuple(names), parents, rest)

    vertices = _flat(doc, "vertices", 3, float)
    V = len(vertices)
    triangles = _flat(doc, "triangles", 3, np.int64)
    if triangles.size and (triangles.min() < 0 or triangles.max() >= V):
        raise ModelValidationError("triangles", "vertex index out of range")
    referenced = np.zeros(V, dtype=bool)
    referenced[triangles.ravel()] = True
    if not referenced.all():
        raise ModelValidationError("triangles", f"vertex {int(np.argmin(referenced))} is not referenced")

    sw = doc.get("skin_weights")
    if not isinstance(sw, list) or len(sw) != V:
        raise ModelValidationError("skin_weights", f"expected {V} per-vertex lists")
    wj = np.zeros((V, MAX_INFLUENCES), dtype=np.int64)
    wv = np.zeros((V, MAX_INFLUENCES))
    for i, entries in enumerate(sw):
        if len(entries) > MAX_INFLUENCES:
            raise ModelValidationError("skin_weights", f"vertex {i} has more than {MAX_INFLUENCES} influences")
        total = 0.0
        for k, (j, w) in enumerate(entries):
            if not 0 <= int(j) < J:
                raise ModelValidationError("skin_weights", f"vertex {i} references joint {j}")
            if w < 0:
                raise ModelValidationError("skin_weights", f"vertex {i} has a negative weight")
            wj[i, k], wv[i, k] = int(j), float(w)
            total += float(w)
        if abs(total - 1.0) > 1e-6:
            raise ModelValidationError("skin_weights", f"vertex {i} weights sum to {total:.6g}, not 1")

    uv = None
    if "uv" in doc and doc["uv"] is not None:
        uv = _flat(doc, "uv", 2, float)
        if len(uv) != V:
            raise ModelValidationError("uv", f"expected {V} coordinates")
        if uv.min() < 0.0 or uv.max() > 1.0:
            raise ModelValidationError("uv", "coordinates must lie in [0, 1]")

    kmap = doc.get("keypoint_map")
    if not isinstance(kmap, list) or len(kmap) != NUM_KEYPOINTS:
        raise ModelValidationError("keypoint_map", f"expected {NUM_KEYPOINTS} entries")
    sources = []
    for k, entry in enumerate(kmap):
        if "joint" in entry:
            j = int(entry["joint"])
            if not 0 <= j < J:
                raise ModelValidationError("keypoint_map", f"slot {k} references joint {j}")
            sources.append(KeypointSource(joint=j))
        elif "vertices" in entry and entry["vertices"]:
            pairs = tuple((int(i), float(w)) for i, w in entry["vertices"])
            if any(not 0 <= i < V for i, _ in pairs):
                raise ModelValidationError("keypoint_map", f"slot {k} vertex index out of range")
            sources.append(KeypointSource(vertices=pairs))
        else:
            raise ModelValidationError("keypoint_map", f"slot {k} needs 'joint' or 'vertices'")

    return SkinnedModel(skeleton, vertices, triangles, wj, wv, tuple(sources), uv)


def _validate_tree(parents: np.ndarray, rest: np.ndarray) -> None:
    if len(parents) == 0 or parents[0] != -1:
        raise ModelValidationError("parents", "joint 0 must be the root (parent -1)")
    for j in range(1, len(parents)):
        p = parents[j]
        if p == j:
            raise ModelValidationError("parents", f"joint {j} is its own parent")
        if not 0 <= p < j:
            # either a second root, an out-of-range index, or a back edge (cycle)
            raise ModelValidationError("parents", f"parent of joint {j} must be in [0, {j})")
        if np.allclose(rest[j], rest[p], atol=0.0, rtol=0.0):
            raise ModelValidationError("rest_positions", f"joint {j} coincides with its parent")


def validate_weights(model: SkinnedModel, tol: float = 1e-6) -> None:
    sums = model.weight_values.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise ModelValidationError("skin_weights", f"vertex {int(bad[0])} weights sum to {sums[bad[0]]:.6g}")


def posed_geometry(model: SkinnedModel, pose) -> tuple:
    """(transforms, posed vertices, posed keypoints) for one pose."""
    transforms = forward_kinematics(model.skeleton, pose)
    verts = skin_mesh(model, transforms)
    kps = regress_keypoints(model, transforms, verts)
    return transforms, verts, kps


def as_pose_vector(rotations: Sequence) -> np.ndarray:
    return np.asarray(rotations, dtype=float).reshape(-1)
