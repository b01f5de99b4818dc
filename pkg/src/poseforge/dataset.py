"""End-to-end dataset generation and COCO keypoint annotation files."""
from __future__ import annotations

import copy
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import formats
from .camera import (ViewDistribution, crop_window, composite, make_camera,
                     sample_viewpoint)
from .ground_truth import (OksConstants, all_neighborhoods, build_annotation,
                           compute_visibility)
from .model import (COCO_KEYPOINT_NAMES, COCO_SKELETON, build_template_humanoid,
                    load_model, posed_geometry)
from .render import SKIN_PALETTE, TextureKind, TextureSpec, rasterize
from .sampler import SamplerConfig, child_seed, default_anatomical_bounds, load_bounds, sample_pose

log = logging.getLogger(__name__)

THREADS_ENV = "POSEFORGE_THREADS"
_VIEW_STREAM = 1


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    text = resources.files("poseforge").joinpath("data/default_config.json").read_text()
    return json.loads(text)


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config field '{path}{key}'")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def resolve_config(overrides: dict | None = None) -> dict:
    cfg = _merge(default_config(), overrides or {})
    validate_config(cfg)
    return cfg


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return resolve_config(doc)


def validate_config(cfg: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(int(cfg["num_poses"]) >= 1, "num_poses must be >= 1")
    need(int(cfg["views_per_pose"]) >= 1, "views_per_pose must be >= 1")
    need(float(cfg["crop_factor"]) >= 1.0, "crop_factor must be >= 1")
    need(10.0 < float(cfg["fov_deg"]) < 120.0, "fov_deg must be in (10, 120)")
    w, h = cfg["image_size"]
    need(int(w) > 0 and int(h) > 0, "image_size must be positive")
    need(cfg["texture"]["mode"] in ("skin", "procedural", "image"), "texture.mode must be skin, procedural or image")
    need(cfg["texture"]["mode"] != "image" or cfg["texture"]["image_path"], "texture.image_path required for image mode")
    need(float(cfg["kappa"]) >= 0.0, "kappa must be >= 0")
    try:
        SamplerConfig(bounds=default_anatomical_bounds(), distribution=cfg["sampler"]["distribution"],
                      pose_variance=float(cfg["sampler"]["pose_variance"]),
                      exp_rate=float(cfg["sampler"]["exp_rate"]))
        ViewDistribution(cfg["view"]["mode"], float(cfg["view"]["latitude_sigma"]),
                         tuple(cfg["view"]["distance_range"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# per-sample pipeline


def procedural_background(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """Smooth random colour field, bilinearly upsampled from a 6x6 grid."""
    grid = rng.integers(0, 256, (6, 6, 3)).astype(float)
    ys = np.linspace(0, 5, height)
    xs = np.linspace(0, 5, width)
    y0 = np.minimum(ys.astype(int), 4)
    x0 = np.minimum(xs.astype(int), 4)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    g00 = grid[y0][:, x0]
    g01 = grid[y0][:, x0 + 1]
    g10 = grid[y0 + 1][:, x0]
    g11 = grid[y0 + 1][:, x0 + 1]
    img = (1 - fy) * ((1 - fx) * g00 + fx * g01) + fy * ((1 - fx) * g10 + fx * g11)
    return np.rint(img).astype(np.uint8)


@dataclass(eq=False)
class Context:
    """Everything a worker needs, built once per process."""

    config: dict
    model: object
    sampler: SamplerConfig
    view: ViewDistribution
    neighborhoods: list
    backgrounds: list
    texture_image: np.ndarray | None
    _bg_cache: dict = None

    @classmethod
    def build(cls, cfg: dict) -> "Context":
        model = build_template_humanoid() if cfg["model"] == "template" else load_model(cfg["model"])
        s = cfg["sampler"]
        bounds = load_bounds(s["bounds"]) if s.get("bounds") else default_anatomical_bounds()
        sampler = SamplerConfig(bounds, s["distribution"], float(s["pose_variance"]),
                                float(s["exp_rate"]), int(cfg["seed"]))
        v = cfg["view"]
        view = ViewDistribution(v["mode"], float(v["latitude_sigma"]), tuple(v["distance_range"]))
        neighborhoods = all_neighborhoods(model, OksConstants(), float(cfg["kappa"]))
        backgrounds = []
        if cfg["backgrounds"] and cfg["background_dir"]:
            backgrounds = formats.list_background_images(cfg["background_dir"])
            if not backgrounds:
                raise ConfigError(f"no images in background_dir {cfg['background_dir']}")
        tex_img = None
        if cfg["texture"]["mode"] == "image":
            if model.uv is None:
                raise ConfigError("image textures need a model with uv coordinates")
            tex_img = formats.read_image(cfg["texture"]["image_path"])
        return cls(cfg, model, sampler, view, neighborhoods, backgrounds, tex_img, {})

    def background(self, rng: np.random.Generator, width: int, height: int):
        if not self.config["backgrounds"]:
            return np.zeros((height, width, 3), dtype=np.uint8)
        if not self.backgrounds:
            return procedural_background(rng, width, height)
        path = self.backgrounds[int(rng.integers(len(self.backgrounds)))]
        if path not in self._bg_cache:
            self._bg_cache[path] = formats.read_image(path)
        return self._bg_cache[path]

    def texture(self, rng: np.random.Generator) -> TextureSpec:
        mode = self.config["texture"]["mode"]
        tone = SKIN_PALETTE[int(rng.integers(len(SKIN_PALETTE)))]
        seed = int(rng.integers(2**31))
        if mode == "skin":
            return TextureSpec(TextureKind.SKIN_TONE, tone, seed=seed)
        if mode == "image":
            return TextureSpec(TextureKind.IMAGE_UV, tone, self.texture_image, seed)
        return TextureSpec(TextureKind.PROCEDURAL, tone, seed=seed)


def pose_seed(seed: int, pose_index: int) -> int:
    return child_seed(seed, 0, pose_index)


def view_seed(seed: int, pose_index: int, view_index: int, attempt: int = 0) -> int:
    return child_seed(seed, _VIEW_STREAM, pose_index, view_index, attempt)


def render_sample(ctx: Context, pose_index: int, view_index: int, pose=None, geometry=None):
    """Render one (pose, view) sample; returns None when every attempt is off-screen."""
    cfg = ctx.config
    seed = int(cfg["seed"])
    if pose is None:
        pose = sample_pose(ctx.sampler, np.random.default_rng(pose_seed(seed, pose_index)))
    if geometry is None:
        geometry = posed_geometry(ctx.model, pose)
    _, verts, kps = geometry
    center = 0.5 * (verts.min(axis=0) + verts.max(axis=0))
    W, H = (int(x) for x in cfg["image_size"])
    max_attempts = 1 + int(cfg["max_retries"])

    for attempt in range(max_attempts):
        vseed = view_seed(seed, pose_index, view_index, attempt)
        rng = np.random.default_rng(vseed)
        vp = sample_viewpoint(ctx.view, rng, ctx.model.height)
        cam = make_camera(vp, center, (W, H), float(cfg["fov_deg"]))
        texture = ctx.texture(rng)
        render = rasterize(verts, ctx.model.triangles, cam, texture, model=ctx.model)
        if render.bbox is None:
            log.info("sample %d/%d attempt %d: subject off-screen", pose_index, view_index, attempt)
            continue
        labels = compute_visibility(render, cam, verts, ctx.neighborhoods, kps,
                                    float(cfg["depth_tolerance"]))
        background = ctx.background(rng, W, H)
        full_rgb = composite(render, background)
        window = crop_window(render.bbox, float(cfg["crop_factor"]), (W, H))
        x0, y0, x1, y1 = window
        cropped = render.crop(window)
        uv, _ = cam.project(kps)
        local = uv - np.array([x0, y0], dtype=float)
        outside = (local[:, 0] < 0) | (local[:, 0] >= x1 - x0) | (local[:, 1] < 0) | (local[:, 1] >= y1 - y0)
        labels = np.where(outside, 0, labels)
        image_id = pose_index * int(cfg["views_per_pose"]) + view_index + 1
        ann = build_annotation(cropped, cam, kps, labels, image_id, image_id, offset=(x0, y0))
        return {
            "pose": pose,
            "pose_index": pose_index,
            "view_index": view_index,
            "attempt": attempt,
            "view_seed": vseed,
            "viewpoint": vp,
            "camera": cam,
            "render": render,
            "crop_window": window,
            "rgb": full_rgb[y0:y1, x0:x1],
            "depth": cropped.depth,
            "mask": cropped.mask,
            "annotation": ann,
            "visibility_full_frame": labels,
        }
    log.warning("sample %d/%d skipped: subject off-screen after %d attempts",
                pose_index, view_index, max_attempts)
    return None


def _file_names(p: int, v: int) -> dict:
    return {"file_name": f"img_{p}_{v}.ppm", "depth_file": f"depth_{p}_{v}.depth",
            "mask_file": f"mask_{p}_{v}.pgm"}


def _process_pose(ctx: Context, p: int, out_dir: Path) -> dict:
    seed = int(ctx.config["seed"])
    ps = pose_seed(seed, p)
    pose = sample_pose(ctx.sampler, np.random.default_rng(ps))
    geometry = posed_geometry(ctx.model, pose)
    records, skipped = [], []
    for v in range(int(ctx.config["views_per_pose"])):
        s = render_sample(ctx, p, v, pose=pose, geometry=geometry)
        if s is None:
            skipped.append({"pose_index": p, "view_index": v})
            continue
        names = _file_names(p, v)
        formats.write_ppm(out_dir / names["file_name"], s["rgb"])
        formats.write_depth(out_dir / names["depth_file"], s["depth"])
        formats.write_pgm(out_dir / names["mask_file"], s["mask"])
        ann = s["annotation"]
        h, w = s["rgb"].shape[:2]
        vp = s["viewpoint"]
        image = {
            "id": ann.image_id,
            **names,
            "width": int(w),
            "height": int(h),
            "pose_index": p,
            "view_index": v,
            "viewpoint": {"latitude": vp.latitude, "longitude": vp.longitude, "distance": vp.distance},
            "crop_window": [int(c) for c in s["crop_window"]],
            "camera": s["camera"].to_json(),
        }
        records.append({"image": image, "annotation": ann.to_coco(),
                        "sample": {"pose_index": p, "view_index": v, "image_id": ann.image_id,
                                   "view_seed": s["view_seed"], "attempts": s["attempt"] + 1}})
    return {"pose_index": p, "pose_seed": ps, "pose": [float(x) for x in pose],
            "records": records, "skipped": skipped}


_WORKER_CTX = None


def _init_worker(cfg):
    global _WORKER_CTX
    _WORKER_CTX = Context.build(cfg)


def _worker(args):
    p, out_dir = args
    return _process_pose(_WORKER_CTX, p, Path(out_dir))


def worker_count(cfg: dict) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return max(1, int(cfg.get("workers", 1)))


def generate_dataset(cfg: dict, workers: int | None = None) -> dict:
    """Generate images, depth, masks and annotations; returns the manifest."""
    validate_config(cfg)
    out_dir = Path(cfg["output_dir"])
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir} is not writable")
    n = int(cfg["num_poses"])
    workers = workers or worker_count(cfg)
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(cfg,)) as pool:
            results = list(pool.map(_worker, [(p, str(out_dir)) for p in range(n)], chunksize=8))
    else:
        ctx = Context.build(cfg)
        results = [_process_pose(ctx, p, out_dir) for p in range(n)]
    results.sort(key=lambda r: r["pose_index"])

    images, annotations, samples, skipped = [], [], [], []
    for r in results:
        for rec in r["records"]:
            images.append(rec["image"])
            annotations.append(rec["annotation"])
            samples.append(rec["sample"])
        skipped += r["skipped"]
    write_coco_json(annotations, images, out_dir / "annotations.json")
    manifest = {
        "config": cfg,
        "num_samples": len(annotations),
        "pose_seeds": [r["pose_seed"] for r in results],
        "poses": [r["pose"] for r in results],
        "samples": samples,
        "skipped": skipped,
        "ground_truth": {"kappa": float(cfg["kappa"]), "depth_tolerance": float(cfg["depth_tolerance"]),
                         "oks_sigmas": [float(s) for s in OksConstants().sigmas]},
    }
    formats.atomic_write_bytes(out_dir / "manifest.json", json.dumps(manifest, indent=1).encode())
    return manifest


# ---------------------------------------------------------------------------
# COCO files


def coco_categories() -> list:
    return [{
        "id": 1,
        "name": "person",
        "supercategory": "person",
        "keypoints": list(COCO_KEYPOINT_NAMES),
        "skeleton": [list(e) for e in COCO_SKELETON],
    }]


def coco_document(annotations, images) -> dict:
    anns = [a.to_coco() if hasattr(a, "to_coco") else a for a in annotations]
    for key, items in (("image", images), ("annotation", anns)):
        ids = [it["id"] for it in items]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate {key} ids")
    image_ids = {im["id"] for im in images}
    for a in anns:
        if a["image_id"] not in image_ids:
            raise ValueError(f"annotation {a['id']} references missing image {a['image_id']}")
        a["num_keypoints"] = int(sum(1 for v in a["keypoints"][2::3] if v > 0))
        a["iscrowd"] = 0
        a["category_id"] = 1
    return {
        "info": {"description": "poseforge synthetic keypoint dataset", "version": "1.0"},
        "images": list(images),
        "annotations": anns,
        "categories": coco_categories(),
    }


def write_coco_json(annotations, images, path) -> dict:
    doc = coco_document(annotations, images)
    formats.atomic_write_bytes(Path(path), json.dumps(doc).encode())
    return doc


def coco_schema() -> dict:
    return json.loads(resources.files("poseforge").joinpath("data/coco_keypoints.schema.json").read_text())


def validate_coco(doc: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``doc`` is not a COCO keypoints file."""
    import jsonschema

    jsonschema.validate(doc, coco_schema())
    ids = {im["id"] for im in doc["images"]}
    for a in doc["annotations"]:
        if a["image_id"] not in ids:
            raise jsonschema.ValidationError(f"annotation {a['id']} has no image")
        if a["num_keypoints"] != sum(1 for v in a["keypoints"][2::3] if v > 0):
            raise jsonschema.ValidationError(f"annotation {a['id']} num_keypoints mismatch")
