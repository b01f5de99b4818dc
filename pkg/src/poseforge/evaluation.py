"""OKS and COCO-style keypoint average precision."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ground_truth import Annotation, OksConstants
from .model import NUM_KEYPOINTS

DEFAULT_THRESHOLDS = tuple(np.round(np.linspace(0.5, 0.95, 10), 2))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
MAX_DETS = 20


class UnscoreableGroundTruth(ValueError):
    pass


@dataclass(eq=False)
class Detection:
    image_id: int
    keypoints: np.ndarray  # (17, 3); third column is ignored
    score: float
    id: int = 0

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=float).reshape(-1, 3)
        if self.keypoints.shape != (NUM_KEYPOINTS, 3):
            raise ValueError("detection needs 17 keypoints")
        if not np.isfinite(self.score):
            raise ValueError("detection score must be finite")


def oks(detection: Detection, gt: Annotation, sigmas: OksConstants | None = None) -> float:
    """Object keypoint similarity with per-keypoint falloff 2*sigma and scale^2 = gt area."""
    sigmas = sigmas or OksConstants()
    vis = gt.keypoints[:, 2] > 0
    if not vis.any():
        raise UnscoreableGroundTruth("unscoreable ground truth")
    k2 = (2.0 * sigmas.sigmas) ** 2
    d2 = np.sum((detection.keypoints[:, :2] - gt.keypoints[:, :2]) ** 2, axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        e = d2 / k2 / (gt.area + np.spacing(1)) / 2.0
        sim = np.exp(-e[vis])
    sim = np.nan_to_num(sim, nan=0.0)
    return float(sim.sum() / vis.sum())


def _interpolated_ap(tp: np.ndarray, n_gt: int) -> float:
    tps = np.cumsum(tp)
    fps = np.cumsum(~tp)
    recall = tps / n_gt
    precision = tps / np.maximum(tps + fps, np.spacing(1))
    # precision envelope, then read it at each recall point
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(q.mean())


def match_and_ap(detections, annotations, sigmas: OksConstants | None = None,
                 thresholds=DEFAULT_THRESHOLDS, max_dets: int = MAX_DETS) -> dict:
    """Greedy per-image OKS matching and 101-point interpolated AP per threshold.

    Detections are ranked by score (ties keep input order); each takes the
    unmatched ground truth with the highest OKS at or above the threshold,
    ties going to the lowest annotation id.  Ground truths with no labelled
    keypoints are left out.
    """
    sigmas = sigmas or OksConstants()
    gts = [g for g in annotations if g.num_keypoints > 0]
    if not gts:
        raise ValueError("empty ground-truth set")
    thresholds = [float(t) for t in thresholds]

    by_img_gt: dict = {}
    for g in sorted(gts, key=lambda g: g.annotation_id):
        by_img_gt.setdefault(g.image_id, []).append(g)
    by_img_dt: dict = {}
    for i, d in enumerate(detections):
        by_img_dt.setdefault(d.image_id, []).append((i, d))

    scores, flags = [], [[] for _ in thresholds]
    for img in sorted(set(by_img_gt) | set(by_img_dt)):
        g_list = by_img_gt.get(img, [])
        d_list = sorted(by_img_dt.get(img, []), key=lambda p: (-p[1].score, p[0]))[:max_dets]
        if not d_list:
            continue
        ious = np.array([[oks(d, g, sigmas) for g in g_list] for _, d in d_list]).reshape(len(d_list), len(g_list))
        for ti, t in enumerate(thresholds):
            taken = np.zeros(len(g_list), dtype=bool)
            for di in range(len(d_list)):
                best, m = -1.0, -1
                for gi in range(len(g_list)):
                    if taken[gi] or ious[di, gi] < t:
                        continue
                    if ious[di, gi] > best:
                        best, m = ious[di, gi], gi
                if m >= 0:
                    taken[m] = True
                flags[ti].append(m >= 0)
        scores += [(-d.score, img, rank) for rank, (_, d) in enumerate(d_list)]

    n_gt = len(gts)
    ap = {}
    if not scores:
        ap = {t: 0.0 for t in thresholds}
    else:
        order = sorted(range(len(scores)), key=lambda i: scores[i][0])  # stable
        for ti, t in enumerate(thresholds):
            tp = np.asarray(flags[ti], dtype=bool)[order]
            ap[t] = _interpolated_ap(tp, n_gt)
    mean_ap = float(np.mean([ap[t] for t in thresholds]))
    return {"ap_per_threshold": ap, "mean_ap": mean_ap}


def report_json(result: dict) -> dict:
    return {
        "ap_per_threshold": {f"{t:.2f}": float(v) for t, v in result["ap_per_threshold"].items()},
        "mean_ap": float(result["mean_ap"]),
    }


def load_detections(path) -> list:
    """COCO results format: [{image_id, keypoints: 51 numbers, score}, ...]."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise ValueError("detections file must hold a JSON array")
    return [Detection(int(d["image_id"]), d["keypoints"], float(d["score"]), id=i + 1) for i, d in enumerate(doc)]


def load_ground_truth(path) -> list:
    doc = json.loads(Path(path).read_text())
    return [Annotation.from_coco(a) for a in doc["annotations"]]


def annotations_as_detections(annotations, score: float = 1.0) -> list:
    return [Detection(a.image_id, a.keypoints.copy(), score, id=i + 1) for i, a in enumerate(annotations)]
