import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from poseforge.analysis import (
    PoseSet, analyze, calibrate_rare_threshold, kmeans, load_pose_set, min_center_distance,
    nearest_pose, pose_distance, rare_pose_ratio, save_pose_set,
)
from poseforge.sampler import SamplerConfig, sample_poses

pose_vec = arrays(np.float64, 63, elements=st.floats(-3.0, 3.0))


@given(pose_vec, pose_vec, pose_vec)
def test_distance_is_a_metric(a, b, c):
    assert pose_distance(a, a) == 0.0
    assert pose_distance(a, b) == pose_distance(b, a)
    assert pose_distance(a, c) <= pose_distance(a, b) + pose_distance(b, c) + 1e-9


def test_k_equals_n_has_zero_inertia(rng):
    x = rng.uniform(-1, 1, (30, 63))
    res = kmeans(x, 30, seed=1)
    assert res.inertia == pytest.approx(0.0, abs=1e-20)


def test_separated_blobs_recovered(rng):
    centers = rng.uniform(-2.5, 2.5, (4, 63))
    x = np.concatenate([c + rng.normal(0, 0.01, (50, 63)) for c in centers])
    res = kmeans(x, 4, seed=0)
    groups = [set(res.labels[i * 50:(i + 1) * 50]) for i in range(4)]
    assert all(len(g) == 1 for g in groups)
    assert len(set().union(*groups)) == 4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_inertia_never_increases(seed, k):
    x = np.random.default_rng(seed).uniform(-1, 1, (60, 63))
    res = kmeans(x, k, seed=seed)
    h = res.inertia_history
    assert all(a >= b - 1e-9 for a, b in zip(h, h[1:]))
    assert res.inertia <= h[-1] + 1e-9


def test_kmeans_deterministic_and_validated(rng):
    x = rng.uniform(-1, 1, (40, 63))
    a, b = kmeans(x, 5, seed=9), kmeans(x, 5, seed=9)
    assert np.array_equal(a.centers, b.centers) and np.array_equal(a.labels, b.labels)
    with pytest.raises(ValueError):
        kmeans(x, 41)
    with pytest.raises(ValueError):
        kmeans(x, 0)


def test_kmeans_duplicate_points():
    x = np.zeros((10, 63))
    x[5:] = 1.0
    res = kmeans(x, 4, seed=0)
    assert res.inertia == 0.0


def test_calibration_exact_count(rng):
    ref = rng.uniform(-1, 1, (100, 63))
    centers = kmeans(ref, 10, seed=0).centers
    thr = calibrate_rare_threshold(ref, centers, 0.05)
    assert np.sum(min_center_distance(ref, centers) > thr) == 5
    assert rare_pose_ratio(ref, centers, thr) == 0.05


def test_calibration_median(rng):
    ref = rng.uniform(-1, 1, (50, 63))
    centers = ref[:1]
    thr = calibrate_rare_threshold(ref, centers, 0.5)
    assert thr == pytest.approx(np.median(min_center_distance(ref, centers)))
    with pytest.raises(ValueError):
        calibrate_rare_threshold(ref, centers, 1.0)


def test_far_query_is_all_rare(rng):
    ref = rng.uniform(-0.2, 0.2, (200, 63))
    centers = kmeans(ref, 5, seed=0).centers
    thr = calibrate_rare_threshold(ref, centers, 0.05)
    assert rare_pose_ratio(ref + 2.5, centers, thr) == 1.0
    assert rare_pose_ratio(np.zeros((0, 63)), centers, thr) == 0.0


def test_self_calibration_ratio():
    ref = sample_poses(SamplerConfig(pose_variance=0.5, seed=3), 400)
    rep = analyze(ref, ref, k=20, rare_fraction=0.1)
    assert rep["ratio"] == pytest.approx(0.1) and rep["reference_ratio"] == rep["ratio"]


def test_nearest_pose_ties(rng):
    x = rng.uniform(-1, 1, (20, 63))
    x[11] = x[4]
    i, d = nearest_pose(x[4] + 1e-3, x)
    assert i == 4 and d == pytest.approx(1e-3 * np.sqrt(63))
    j, _ = nearest_pose(x[7], x)
    assert j == 7
    with pytest.raises(ValueError):
        nearest_pose(x[0], np.zeros((0, 63)))


def test_pose_set_io(tmp_path, rng):
    ps = PoseSet(rng.uniform(-1, 1, (5, 63)), labels=list("abcde"))
    p = tmp_path / "p.json"
    save_pose_set(ps, p)
    back = load_pose_set(p)
    assert np.array_equal(back.poses, ps.poses) and back.labels == ps.labels
    with pytest.raises(ValueError):
        PoseSet(np.full((1, 63), 3.2))
    p.write_text(json.dumps({"nope": []}))
    with pytest.raises(ValueError):
        load_pose_set(p)
