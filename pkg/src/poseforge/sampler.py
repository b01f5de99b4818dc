"""Bounded pose-space sampling with per-joint rotation distributions."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .model import JOINT_NAMES

POSE_DIM = 3 * len(JOINT_NAMES)
CLAMP_EPS = 1e-3


class Distribution(str, enum.Enum):
    PAIR_OF_GAUSSIANS = "PairOfGaussians"
    TRUNCATED_GAUSSIAN = "TruncatedGaussian"
    UNIFORM_FIXED = "UniformFixed"
    UNIFORM_EXPONENTIAL = "UniformExponential"


@dataclass(frozen=True, eq=False)
class JointBounds:
    lower: np.ndarray  # (63,) radians, <= 0
    upper: np.ndarray  # (63,) radians, >= 0

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(lo > 0) or np.any(hi < 0):
            raise ValueError("bounds must satisfy lower <= 0 <= upper")
        if np.any(lo <= -math.pi) or np.any(hi >= math.pi):
            raise ValueError("bounds must lie strictly inside (-pi, pi)")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def __eq__(self, other):
        if not isinstance(other, JointBounds):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def contains(self, pose) -> bool:
        p = np.asarray(pose, dtype=float).reshape(-1)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def to_json(self, joint_names=JOINT_NAMES) -> dict:
        lo = self.lower.reshape(-1, 3)
        hi = self.upper.reshape(-1, 3)
        return {
            "format_version": 1,
            "units": "radians",
            "axes": ["x", "y", "z"],
            "joints": {
                name: [[float(lo[j, a]), float(hi[j, a])] for a in range(3)]
                for j, name in enumerate(joint_names)
            },
        }

    @classmethod
    def from_json(cls, doc: dict, joint_names=JOINT_NAMES) -> "JointBounds":
        joints = doc["joints"]
        missing = [n for n in joint_names if n not in joints]
        if missing:
            raise ValueError(f"bounds table lacks joints: {', '.join(missing)}")
        table = np.array([joints[n] for n in joint_names], dtype=float)  # (J, 3, 2)
        return cls(table[..., 0].reshape(-1), table[..., 1].reshape(-1))


def load_bounds(path) -> JointBounds:
    return JointBounds.from_json(json.loads(Path(path).read_text()))


def default_anatomical_bounds() -> JointBounds:
    text = resources.files("poseforge").joinpath("data/anatomical_bounds.json").read_text()
    return JointBounds.from_json(json.loads(text))


def scale_bounds(bounds: JointBounds, pose_variance: float) -> JointBounds:
    """Multiply the bounds by ``pose_variance`` and keep them inside (-pi, pi)."""
    if pose_variance < 0:
        raise ValueError("pose_variance must be >= 0")
    lim = math.pi - CLAMP_EPS
    lo = np.clip(pose_variance * bounds.lower, -lim, lim)
    hi = np.clip(pose_variance * bounds.upper, -lim, lim)
    return JointBounds(lo + 0.0, hi + 0.0)


@dataclass(frozen=True)
class SamplerConfig:
    bounds: JointBounds = field(default_factory=default_anatomical_bounds)
    distribution: Distribution = Distribution.PAIR_OF_GAUSSIANS
    pose_variance: float = 1.0
    exp_rate: float = 3.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "distribution", Distribution(self.distribution))
        if self.pose_variance < 0:
            raise ValueError("pose_variance must be >= 0")
        if not self.exp_rate > 0:
            raise ValueError("exp_rate must be > 0")

    def with_(self, **changes) -> "SamplerConfig":
        return replace(self, **changes)


def _half_normal(rng, sigma, bound, size):
    """|N(0, sigma)| rejection-truncated to [0, bound]."""
    out = np.abs(rng.standard_normal(size)) * sigma
    bad = out > bound
    while np.any(bad):
        out[bad] = np.abs(rng.standard_normal(int(bad.sum()))) * sigma[bad]
        bad = out > bound
    return out


def sample_angles(distribution, lower, upper, rng: np.random.Generator, size=None) -> np.ndarray:
    """Vectorised ``sample_angle``: one draw per element of the broadcast bounds.

    ``lower``/``upper`` may be arrays (one component each) or scalars combined
    with ``size`` for many i.i.d. draws.
    """
    dist = Distribution(distribution)
    lo, hi = np.broadcast_arrays(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
    if size is not None:
        lo, hi = np.broadcast_to(lo, size), np.broadcast_to(hi, size)
    out_shape = lo.shape
    lo, hi = lo.ravel(), hi.ravel()
    n = lo.size

    if dist is Distribution.PAIR_OF_GAUSSIANS:
        positive = rng.random(n) < 0.5
        sigma = np.where(positive, hi, -lo) / 3.0
        bound = np.where(positive, hi, -lo)
        mag = _half_normal(rng, sigma, bound, n)
        out = np.where(positive, mag, -mag)
    elif dist is Distribution.TRUNCATED_GAUSSIAN:
        sigma = np.maximum(-lo, hi) / 3.0
        out = rng.standard_normal(n) * sigma
        bad = (out < lo) | (out > hi)
        while np.any(bad):
            out[bad] = rng.standard_normal(int(bad.sum())) * sigma[bad]
            bad = (out < lo) | (out > hi)
    elif dist is Distribution.UNIFORM_FIXED:
        out = lo + (hi - lo) * rng.random(n)
    else:
        raise ValueError("UniformExponential needs an exp_rate; use sample_angles_exp")

    return (np.clip(out, lo, hi) + 0.0).reshape(out_shape)


def sample_angles_exp(lower, upper, exp_rate: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniform on [u*lower, u*upper] with u ~ Exponential(exp_rate) clamped to [0, 1]."""
    lo, hi = np.broadcast_arrays(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
    if size is not None:
        lo, hi = np.broadcast_to(lo, size), np.broadcast_to(hi, size)
    shape = lo.shape
    lo, hi = lo.ravel(), hi.ravel()
    u = np.minimum(rng.exponential(1.0 / exp_rate, lo.size), 1.0)
    out = u * lo + (u * hi - u * lo) * rng.random(lo.size)
    return (np.clip(out, lo, hi) + 0.0).reshape(shape)


def sample_angle(distribution, lower: float, upper: float, rng: np.random.Generator,
                 exp_rate: float = 3.0) -> float:
    if lower > 0 or upper < 0:
        raise ValueError("sample_angle requires lower <= 0 <= upper")
    if lower == 0.0 and upper == 0.0:
        return 0.0
    if Distribution(distribution) is Distribution.UNIFORM_EXPONENTIAL:
        return float(sample_angles_exp(lower, upper, exp_rate, rng, size=1)[0])
    return float(sample_angles(distribution, lower, upper, rng, size=1)[0])


def sample_pose(config: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """One 63-dim pose, each component drawn independently inside the scaled bounds."""
    b = scale_bounds(config.bounds, config.pose_variance)
    if config.distribution is Distribution.UNIFORM_EXPONENTIAL:
        pose = sample_angles_exp(b.lower, b.upper, config.exp_rate, rng)
    else:
        pose = sample_angles(config.distribution, b.lower, b.upper, rng)
    # exact zero where the scaled range collapses
    return np.where((b.lower == 0.0) & (b.upper == 0.0), 0.0, pose)


def child_seed(seed: int, *key: int) -> int:
    """Deterministic 64-bit seed for stream ``key`` derived from a root seed."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def pose_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(seed, 0, index))


def sample_pose_at(config: SamplerConfig, index: int) -> np.ndarray:
    """Pose ``index`` of the stream defined by ``config.seed``; order independent."""
    return sample_pose(config, pose_rng(config.seed, index))


def sample_poses(config: SamplerConfig, n: int, start: int = 0) -> np.ndarray:
    return np.stack([sample_pose_at(config, i) for i in range(start, start + n)]) if n else np.zeros((0, POSE_DIM))
