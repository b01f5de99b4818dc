import numpy as np
import pytest

from oracles import point_visible_by_ray
from poseforge.camera import Viewpoint, make_camera
from poseforge.ground_truth import (
    Annotation, OksConstants, SubjectNotVisibleError, all_neighborhoods, build_annotation,
    compute_visibility, keypoint_neighborhood, visible_vertices,
)
from poseforge.model import JOINT_INDEX, posed_geometry
from poseforge.render import RenderOutput, mask_and_bbox, rasterize

OKS = OksConstants()
L_WRIST = 9


def frontal(template, pose=None, lat=0.0, lon=90.0, dist=3.0, size=256):
    pose = np.zeros(63) if pose is None else pose
    _, v, k = posed_geometry(template, pose)
    c = 0.5 * (v.min(0) + v.max(0))
    cam = make_camera(Viewpoint(lat, lon, dist * template.height), c, (size, size))
    return cam, v, k, rasterize(v, template.triangles, cam)


def arm_behind_back():
    pose = np.zeros(63)
    pose[3 * JOINT_INDEX["left_shoulder"] + 2] = 2.0
    return pose


def test_kappa_zero_is_nearest_vertex(template):
    for k in range(17):
        ids = keypoint_neighborhood(template, OKS, k, kappa=0.0)
        d = np.linalg.norm(template.vertices - template.rest_keypoints()[k], axis=1)
        assert ids.tolist() == [int(np.argmin(d))]


def test_ankle_neighborhood_larger_than_nose(template):
    nose = keypoint_neighborhood(template, OKS, 0)
    ankle = keypoint_neighborhood(template, OKS, 15)
    assert len(ankle) > len(nose)


def test_kappa_one_sizes(template):
    for ids in all_neighborhoods(template):
        assert 0 < len(ids) < 0.2 * template.num_vertices


def test_neighborhoods_grow_with_kappa(template):
    for k in range(17):
        small = set(keypoint_neighborhood(template, OKS, k, 0.5).tolist())
        big = set(keypoint_neighborhood(template, OKS, k, 1.5).tolist())
        assert small <= big or len(small) == 1


def test_frontal_view_all_visible(template):
    cam, v, k, r = frontal(template)
    labels = compute_visibility(r, cam, v, all_neighborhoods(template), k)
    # ears sit on the sides of the head and face sideways
    assert np.all(np.delete(labels, [3, 4]) == 2)
    for ear, lon in ((3, 180.0), (4, 0.0)):
        cam, v, k, r = frontal(template, lon=lon)
        assert compute_visibility(r, cam, v, all_neighborhoods(template), k)[ear] == 2


def test_outside_image_is_zero(template):
    cam, v, k, r = frontal(template, dist=0.6)
    labels = compute_visibility(r, cam, v, all_neighborhoods(template), k)
    uv, _ = cam.project(k)
    out = (uv[:, 0] < 0) | (uv[:, 0] >= 256) | (uv[:, 1] < 0) | (uv[:, 1] >= 256)
    assert out.any()
    assert np.all(labels[out] == 0) and np.all(labels[~out] > 0)


def test_wrist_behind_torso_is_occluded(template):
    cam, v, k, r = frontal(template, arm_behind_back())
    nb = all_neighborhoods(template)
    labels = compute_visibility(r, cam, v, nb, k)
    assert labels[L_WRIST] == 1
    # the ray oracle agrees: no neighborhood vertex has a clear line of sight
    assert not any(point_visible_by_ray(cam, v, template.triangles, v[i]) for i in nb[L_WRIST])
    assert labels[10] == 2  # right wrist still out to the side


def test_visible_vertices_have_finite_depth(template, rng):
    pose = rng.uniform(-0.5, 0.5, 63)
    cam, v, k, r = frontal(template, pose, lat=70.0, lon=20.0)
    vis = visible_vertices(r, cam, v)
    uv, _ = cam.project(v[vis])
    px = np.floor(uv).astype(int)
    assert np.all(np.isfinite(r.depth[px[:, 1], px[:, 0]]))
    # silhouette consistency: visible vertices sit inside the bbox grown by 1 px
    x, y, w, h = r.bbox
    assert np.all((uv[:, 0] >= x - 1) & (uv[:, 0] <= x + w + 1))
    assert np.all((uv[:, 1] >= y - 1) & (uv[:, 1] <= y + h + 1))


def test_kappa_monotone_labels(template, rng):
    for s in range(5):
        pose = rng.uniform(-1.0, 1.0, 63) * (template.skeleton.parents >= 0).repeat(3)
        cam, v, k, r = frontal(template, pose, lat=rng.uniform(-80, 80), lon=rng.uniform(-180, 180))
        a = compute_visibility(r, cam, v, all_neighborhoods(template, kappa=0.5), k)
        b = compute_visibility(r, cam, v, all_neighborhoods(template, kappa=1.5), k)
        assert not np.any((a == 2) & (b == 1))


def test_build_annotation_zeroing(template):
    cam, v, k, r = frontal(template)
    ann = build_annotation(r, cam, k, np.zeros(17, int), 3, 4)
    assert np.all(ann.keypoints == 0)
    assert ann.area == r.mask.sum() and ann.num_keypoints == 0
    labels = compute_visibility(r, cam, v, all_neighborhoods(template), k)
    ann = build_annotation(r, cam, k, labels, 3, 4)
    assert ann.area <= ann.bbox[2] * ann.bbox[3]
    assert np.allclose(ann.keypoints_3d[:, 2], cam.to_camera(k)[:, 2])


def test_build_annotation_empty_raises(template):
    cam, v, k, _ = frontal(template)
    d = np.full((256, 256), np.inf, dtype=np.float32)
    mask, bbox = mask_and_bbox(d)
    empty = RenderOutput(np.zeros((256, 256, 3), np.uint8), d, mask, bbox)
    with pytest.raises(SubjectNotVisibleError):
        build_annotation(empty, cam, k, np.full(17, 2), 1, 1)


def test_annotation_round_trip(template):
    cam, v, k, r = frontal(template)
    labels = compute_visibility(r, cam, v, all_neighborhoods(template), k)
    ann = build_annotation(r, cam, k, labels, 5, 6)
    back = Annotation.from_coco(ann.to_coco())
    assert back == ann and np.array_equal(back.keypoints, ann.keypoints)


def test_oks_constants_validated():
    with pytest.raises(ValueError):
        OksConstants(np.ones(16))
    with pytest.raises(ValueError):
        OksConstants(np.zeros(17))
