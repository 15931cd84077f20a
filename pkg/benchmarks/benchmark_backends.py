"""Timing comparison between the compiled kernels and the numpy fallback.

Runs the forward render and the gradient pass on the same scene under both
backends, checks that they produce matching output, and prints per-pass
timings.  Backend choice goes through ALPROBE_BACKEND, so the numbers here
reflect what users get by flipping that variable.

Usage:
    python benchmarks/benchmark_backends.py [--res 96] [--spp 32] [--repeats 3]
"""
from __future__ import annotations

import argparse
import os
import time

import numpy as np

from alprobe.core import quaternion
from alprobe.core.camera import PinholeCamera
from alprobe.core.mesh import make_uv_sphere
from alprobe.core.pose import PoseScale
from alprobe.envlight import EnvMap
from alprobe.render import AlpModel, Scene, render, render_with_gradients
from alprobe.render.backend import _HAVE_COMPILED, active_backend


def build_scene(res: int, spp: int) -> Scene:
    mesh = make_uv_sphere(24, 48)
    rng = np.random.default_rng(7)
    tex = 32
    albedo = np.clip(0.5 + 0.3 * rng.standard_normal((tex, tex, 3)), 0.05, 0.95)
    model = AlpModel(
        mesh=mesh,
        albedo=albedo,
        roughness=np.full((tex, tex), 0.2),
        visibility=np.ones((tex, tex)),
    )
    env = EnvMap.from_radiance(
        0.2 + rng.random((16, 32, 3)) ** 2 * np.array([2.5, 2.0, 1.5])
    )
    cam = PinholeCamera.look_at(
        np.array([0.0, 0.0, 4.0]), np.zeros(3), focal=60.0,
        width=res, height=res,
    )
    pose = PoseScale(
        rotation=quaternion.from_axis_angle(np.array([0.3, 1.0, 0.2]), 0.7),
        translation=np.array([0.05, -0.1, 0.0]),
        scale=1.0,
    )
    return Scene(model, pose, cam, env, spp=spp, seed=0)


def time_pass(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_backend(name: str, scene: Scene, g_img, g_mask, repeats: int):
    os.environ["ALPROBE_BACKEND"] = name
    assert active_backend() == name
    out = render(scene)
    t_fwd = time_pass(lambda: render(scene), repeats)
    t_bwd = time_pass(
        lambda: render_with_gradients(scene, g_img, g_mask), repeats
    )
    return out, t_fwd, t_bwd


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--res", type=int, default=96, help="image side in pixels")
    ap.add_argument("--spp", type=int, default=32, help="samples per pixel")
    ap.add_argument("--repeats", type=int, default=3, help="best-of-N timing")
    args = ap.parse_args()

    if not _HAVE_COMPILED:
        raise SystemExit("compiled kernels are not importable; build them first")

    scene = build_scene(args.res, args.spp)
    g_img = np.ones((args.res, args.res, 3))
    g_mask = np.zeros((args.res, args.res))
    saved = os.environ.get("ALPROBE_BACKEND")
    try:
        out_c, fwd_c, bwd_c = run_backend("compiled", scene, g_img, g_mask,
                                          args.repeats)
        out_n, fwd_n, bwd_n = run_backend("numpy", scene, g_img, g_mask,
                                          args.repeats)
    finally:
        if saved is None:
            os.environ.pop("ALPROBE_BACKEND", None)
        else:
            os.environ["ALPROBE_BACKEND"] = saved

    diff = float(np.abs(out_c.image.pixels - out_n.image.pixels).max())
    print(f"scene: sphere {args.res}x{args.res} @ {args.spp} spp, "
          f"best of {args.repeats}")
    print(f"max |compiled - numpy| image difference: {diff:.3e}")
    print(f"{'pass':<10} {'compiled':>10} {'numpy':>10} {'speedup':>9}")
    print(f"{'forward':<10} {fwd_c:>9.3f}s {fwd_n:>9.3f}s {fwd_n / fwd_c:>8.1f}x")
    print(f"{'gradient':<10} {bwd_c:>9.3f}s {bwd_n:>9.3f}s {bwd_n / bwd_c:>8.1f}x")


if __name__ == "__main__":
    main()
