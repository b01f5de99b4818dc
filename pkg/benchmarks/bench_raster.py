"""Compare the compiled and pure-numpy rasterization kernels.

Renders the posed template from a few viewpoints at several resolutions
with each available kernel and reports the median wall time per frame.

    python benchmarks/bench_raster.py --sizes 256 512 1024 --repeat 5
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from poseforge.camera import ViewDistribution, make_camera, sample_viewpoint
from poseforge.model import build_template_humanoid, posed_geometry
from poseforge.render import KERNELS, rasterize_triangles, _prepare
from poseforge.sampler import SamplerConfig, sample_pose_at


def scenes(n_views: int, size: int, seed: int):
    model = build_template_humanoid()
    rng = np.random.default_rng(seed)
    sampler = SamplerConfig(seed=seed)
    out = []
    for i in range(n_views):
        _, verts, _ = posed_geometry(model, sample_pose_at(sampler, i))
        center = 0.5 * (verts.min(0) + verts.max(0))
        cam = make_camera(sample_viewpoint(ViewDistribution(), rng, model.height), center, (size, size))
        pts, _, _ = _prepare(cam.to_camera(verts), model.triangles, cam, 0.01)
        xy, z = cam.project_camera(pts)
        out.append((xy, 1.0 / z))
    return out


def time_kernel(backend: str, frames, size: int, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for xy, invz in frames:
            rasterize_triangles(xy, invz, size, size, backend=backend)
        times.append((time.perf_counter() - t0) / len(frames))
    return statistics.median(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512, 1024])
    ap.add_argument("--views", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = [b for b in ("ext", "python") if b in KERNELS]
    if "ext" not in backends:
        print("compiled kernel not built; timing the numpy kernel only")
    print(f"{'size':>6} " + " ".join(f"{b + ' ms':>10}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))
    for size in args.sizes:
        frames = scenes(args.views, size, args.seed)
        # both kernels must agree bit for bit
        if len(backends) == 2:
            for xy, invz in frames[:1]:
                a = rasterize_triangles(xy, invz, size, size, backend="ext")
                b = rasterize_triangles(xy, invz, size, size, backend="python")
                assert all(np.array_equal(x, y) for x, y in zip(a, b)), "kernels disagree"
        ms = {b: 1e3 * time_kernel(b, frames, size, args.repeat) for b in backends}
        row = f"{size:>6} " + " ".join(f"{ms[b]:>10.2f}" for b in backends)
        if len(backends) == 2:
            row += f"   {ms['python'] / ms['ext']:>6.2f}x"
        print(row)


if __name__ == "__main__":
    main()
