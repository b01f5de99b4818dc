"""Pose-space analysis: distances, k-means, rare-pose threshold and ratio."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sampler import POSE_DIM

DEFAULT_K = 100


@dataclass(eq=False)
class PoseSet:
    poses: np.ndarray  # (N, 63)
    labels: list | None = None

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, POSE_DIM)
        if np.any(np.abs(self.poses) >= math.pi):
            raise ValueError("pose components must lie in (-pi, pi)")
        if self.labels is not None and len(self.labels) != len(self.poses):
            raise ValueError("labels must match the number of poses")

    def __len__(self) -> int:
        return len(self.poses)

    def to_json(self) -> dict:
        doc = {"poses": [[float(x) for x in p] for p in self.poses]}
        if self.labels is not None:
            doc["labels"] = list(self.labels)
        return doc


def load_pose_set(path) -> PoseSet:
    doc = json.loads(Path(path).read_text())
    if "poses" not in doc:
        raise ValueError("pose file lacks 'poses'")
    return PoseSet(np.asarray(doc["poses"], dtype=float), doc.get("labels"))


def save_pose_set(pose_set: PoseSet, path) -> None:
    Path(path).write_text(json.dumps(pose_set.to_json()))


def _as_matrix(poses) -> np.ndarray:
    if isinstance(poses, PoseSet):
        return poses.poses
    return np.asarray(poses, dtype=float).reshape(-1, POSE_DIM)


def pose_distance(a, b) -> float:
    """Plain Euclidean distance in the 63-dim rotation vector space."""
    return float(np.linalg.norm(np.asarray(a, float).ravel() - np.asarray(b, float).ravel()))


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] + (c * c).sum(1)[None, :] - 2.0 * x @ c.T
    return np.maximum(d, 0.0)


def min_center_distance(poses, centers) -> np.ndarray:
    x, c = _as_matrix(poses), np.asarray(centers, float)
    nearest = np.argmin(_sq_dists(x, c), axis=1)
    return np.linalg.norm(x - c[nearest], axis=1)


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: list


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    idx = [int(rng.integers(n))]
    d2 = ((x - x[idx[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with chosen centers
            nxt = int(rng.choice(np.setdiff1d(np.arange(n), idx)))
        idx.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(1))
    return x[idx].copy()


def kmeans(poses, k: int, seed: int = 0, max_iters: int = 100) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding; empty clusters jump to the farthest point."""
    x = _as_matrix(poses)
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, k, rng)
    labels = None
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        new = np.argmin(_sq_dists(x, centers), axis=1)
        d2 = ((x - centers[new]) ** 2).sum(1)
        history.append(float(d2.sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        for j in range(k):
            if counts[j]:
                centers[j] = sums[j] / counts[j]
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(d2))
            centers[j] = x[far]
            labels[far] = j
            d2[far] = 0.0
    final = ((x - centers[labels]) ** 2).sum()
    return KMeansResult(centers, labels, float(final), it, history)


def calibrate_rare_threshold(reference, centers, target_rare_fraction: float) -> float:
    """Distance threshold leaving exactly ceil(target * N) reference poses beyond it.

    The threshold sits midway between the last common and the first rare
    min-distance, so a 0.5 target on an even-sized set gives the median.
    """
    if not 0.0 < target_rare_fraction < 1.0:
        raise ValueError("target_rare_fraction must be in (0, 1)")
    d = np.sort(min_center_distance(reference, centers))
    n = len(d)
    m = min(n, math.ceil(target_rare_fraction * n - 1e-12))
    upper = d[n - m]
    lower = d[n - m - 1] if n - m - 1 >= 0 else 0.0
    return float(0.5 * (lower + upper))


def rare_pose_ratio(query, centers, threshold: float) -> float:
    d = min_center_distance(query, centers)
    return float(np.mean(d > threshold)) if len(d) else 0.0


def nearest_pose(query, pose_set) -> tuple:
    """(index, distance) of the closest pose; ties go to the lowest index."""
    x = _as_matrix(pose_set)
    if len(x) == 0:
        raise ValueError("empty pose set")
    d = np.linalg.norm(x - np.asarray(query, float).ravel(), axis=1)
    i = int(np.argmin(d))
    return i, float(d[i])


def analyze(reference, query, k: int = DEFAULT_K, rare_fraction: float = 0.05,
            seed: int = 0, max_iters: int = 100) -> dict:
    ref = _as_matrix(reference)
    k_eff = min(k, len(ref))
    km = kmeans(ref, k_eff, seed=seed, max_iters=max_iters)
    thr = calibrate_rare_threshold(ref, km.centers, rare_fraction)
    return {
        "k": k_eff,
        "threshold": thr,
        "target_fraction": rare_fraction,
        "reference_ratio": rare_pose_ratio(ref, km.centers, thr),
        "ratio": rare_pose_ratio(query, km.centers, thr),
        "n_reference": len(ref),
        "n_query": len(_as_matrix(query)),
        "kmeans_iterations": km.n_iter,
    }
