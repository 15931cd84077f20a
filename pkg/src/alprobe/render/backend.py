"""Kernel backend selection and the threaded tile dispatcher.

ALPROBE_BACKEND picks "compiled" or "numpy" (default: compiled when the
extension imported cleanly).  ALPROBE_THREADS sets the worker count for the
compiled path.  Tiles have a fixed size and per-tile gradient buffers are
merged in tile order, so output bits never depend on the thread count; the
numpy path runs single-threaded and is deterministic by construction.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import kernels_np
from .bvh import build_bvh

try:
    from . import _kernels

    _HAVE_COMPILED = True
except ImportError:
    _kernels = None
    _HAVE_COMPILED = False

_TILE = 1024  # pixels per tile; fixed so results are thread-count invariant
_BVH_CACHE_ATTR = "_bvh_cache"


def active_backend() -> str:
    choice = os.environ.get("ALPROBE_BACKEND", "").strip().lower()
    if choice in ("numpy", "python"):
        return "numpy"
    if choice in ("compiled", "cython", "ext"):
        if not _HAVE_COMPILED:
            raise RuntimeError("compiled kernels requested but not importable")
        return "compiled"
    return "compiled" if _HAVE_COMPILED else "numpy"


def thread_count() -> int:
    raw = os.environ.get("ALPROBE_THREADS", "").strip()
    if raw:
        return max(1, int(raw))
    return min(4, os.cpu_count() or 1)


def _mesh_bvh(mesh):
    cached = getattr(mesh, _BVH_CACHE_ATTR, None)
    if cached is None:
        cached = build_bvh(mesh.vertices, mesh.triangles)
        object.__setattr__(mesh, _BVH_CACHE_ATTR, cached)
    return cached


def raycast(origin, dirs, mesh) -> np.ndarray:
    if active_backend() == "compiled":
        bvh = _mesh_bvh(mesh)
        out = np.empty(dirs.shape[0], dtype=np.int32)
        dirs = np.ascontiguousarray(dirs)
        origin = np.ascontiguousarray(origin, dtype=np.float64)
        n = thread_count()
        if n == 1 or dirs.shape[0] <= _TILE:
            _kernels.raycast(
                origin, dirs, mesh.vertices, mesh.triangles,
                bvh.bounds_min, bvh.bounds_max, bvh.left, bvh.right,
                bvh.start, bvh.count, bvh.tri_order, out,
            )
            return out
        with ThreadPoolExecutor(max_workers=n) as pool:
            futs = [
                pool.submit(
                    _kernels.raycast,
                    origin, dirs[s : s + _TILE], mesh.vertices, mesh.triangles,
                    bvh.bounds_min, bvh.bounds_max, bvh.left, bvh.right,
                    bvh.start, bvh.count, bvh.tri_order, out[s : s + _TILE],
                )
                for s in range(0, dirs.shape[0], _TILE)
            ]
            for f in futs:
                f.result()
        return out
    return kernels_np.raycast(origin, dirs, mesh.vertices, mesh.triangles)


def shade_forward(pids, wo, nrm, t1, t2, uv, albedo, rough, vis, env_rad,
                  spp: int, seed: int) -> np.ndarray:
    if active_backend() != "compiled":
        return kernels_np.shade_forward(
            pids, wo, nrm, t1, t2, uv, albedo, rough, vis, env_rad, spp, seed
        )
    p = pids.shape[0]
    out = np.empty((p, 3))
    args = lambda s, e: (
        pids[s:e], wo[s:e], nrm[s:e], t1[s:e], t2[s:e], uv[s:e],
        albedo, rough, vis, env_rad, spp, seed, out[s:e],
    )
    n = thread_count()
    if n == 1 or p <= _TILE:
        _kernels.shade_forward(*args(0, p))
        return out
    with ThreadPoolExecutor(max_workers=n) as pool:
        futs = [
            pool.submit(_kernels.shade_forward, *args(s, min(s + _TILE, p)))
            for s in range(0, p, _TILE)
        ]
        for f in futs:
            f.result()
    return out


def shade_backward(pids, wo, nrm, t1, t2, uv, albedo, rough, vis, env_rad,
                   env_sig, spp: int, seed: int, g_s) -> dict:
    if active_backend() != "compiled":
        return kernels_np.shade_backward(
            pids, wo, nrm, t1, t2, uv, albedo, rough, vis, env_rad, env_sig,
            spp, seed, g_s,
        )
    p = pids.shape[0]
    s_px = np.empty((p, 3))
    g_alb = np.empty((p, 3))
    g_r = np.empty(p)
    g_vis = np.empty(p)
    g_n = np.empty((p, 3))
    g_t1 = np.empty((p, 3))
    g_t2 = np.empty((p, 3))

    tiles = list(range(0, p, _TILE)) or [0]
    bufs = [np.zeros_like(env_sig) for _ in tiles]

    def run(ti, s):
        e = min(s + _TILE, p)
        _kernels.shade_backward(
            pids[s:e], wo[s:e], nrm[s:e], t1[s:e], t2[s:e], uv[s:e],
            albedo, rough, vis, env_rad, env_sig, spp, seed, g_s[s:e],
            s_px[s:e], bufs[ti], g_alb[s:e], g_r[s:e], g_vis[s:e],
            g_n[s:e], g_t1[s:e], g_t2[s:e],
        )

    n = thread_count()
    if n == 1 or p <= _TILE:
        for ti, s in enumerate(tiles):
            if p:
                run(ti, s)
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            for f in [pool.submit(run, ti, s) for ti, s in enumerate(tiles)]:
                f.result()

    g_env = np.zeros_like(env_sig)
    for b in bufs:  # fixed merge order keeps bits thread-count independent
        g_env += b
    return {
        "s": s_px, "g_env_theta": g_env, "g_albedo_px": g_alb,
        "g_rough_px": g_r, "g_vis_px": g_vis, "g_n": g_n,
        "g_t1": g_t1, "g_t2": g_t2,
    }
