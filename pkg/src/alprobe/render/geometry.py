"""Per-pixel geometry attributes and their pose adjoints.

Attributes are evaluated in world space from the fixed triangle assignment
the raycast produced, so everything downstream is smooth in the pose until
a pixel changes triangle (handled by the coverage band at silhouettes and
continuous across interior shared edges).

The shading frame comes from the interpolated uv tangent, which varies
smoothly across the surface; a view- or axis-based frame would introduce
derivative discontinuities that break finite-difference validation.
"""

from __future__ import annotations

import numpy as np

from ..core.quaternion import to_matrix

_TINY = 1e-30


def _dot(a, b):
    return np.einsum("pj,pj->p", a, b)


def _any_perpendicular(n: np.ndarray) -> np.ndarray:
    axis = np.where(
        (np.abs(n[:, 1]) <= 0.9)[:, None], np.array([0.0, 1.0, 0.0]),
        np.array([1.0, 0.0, 0.0])
    )
    t = np.cross(axis, n)
    return t / np.maximum(np.linalg.norm(t, axis=1, keepdims=True), _TINY)


def pixel_attributes(mesh, pose, cam, tri: np.ndarray, dirs: np.ndarray) -> dict:
    """World-space shading inputs for hit pixels.

    ``tri`` (P,) triangle ids, ``dirs`` (P, 3) unit ray directions.  The
    returned dict carries every intermediate the backward pass reuses.
    """
    rot = to_matrix(pose.rotation)
    verts_w = pose.transform_point(mesh.vertices)
    rn = mesh.normals @ rot.T
    rt = mesh.tangents @ rot.T

    vid = mesh.triangles[tri]  # (P, 3)
    p0, p1, p2 = verts_w[vid[:, 0]], verts_w[vid[:, 1]], verts_w[vid[:, 2]]

    origin = cam.center
    e1 = p1 - p0
    e2 = p2 - p0
    pv = np.cross(dirs, e2)
    det = _dot(e1, pv)
    det_s = np.where(np.abs(det) > _TINY, det, _TINY)
    tv = origin[None, :] - p0
    qv = np.cross(tv, e1)
    b1 = _dot(tv, pv) / det_s
    b2 = _dot(dirs, qv) / det_s
    b0 = 1.0 - b1 - b2
    bary = np.stack([b0, b1, b2], axis=-1)

    position = b0[:, None] * p0 + b1[:, None] * p1 + b2[:, None] * p2

    rn_tri = rn[vid]  # (P, 3, 3)
    rt_tri = rt[vid]
    uv_tri = mesh.uvs[vid]  # (P, 3, 2)
    n_raw = np.einsum("pi,pij->pj", bary, rn_tri)
    n_len = np.maximum(np.linalg.norm(n_raw, axis=1), _TINY)
    nrm = n_raw / n_len[:, None]

    tg_raw = np.einsum("pi,pij->pj", bary, rt_tri)
    w = tg_raw - _dot(tg_raw, nrm)[:, None] * nrm
    w_len = np.linalg.norm(w, axis=1)
    frame_ok = w_len > 1e-9
    t1 = np.where(
        frame_ok[:, None], w / np.maximum(w_len, _TINY)[:, None], _any_perpendicular(nrm)
    )
    t2 = np.cross(nrm, t1)

    uv = np.einsum("pi,pij->pj", bary, uv_tri)
    uv[:, 0] = np.mod(uv[:, 0], 1.0)

    return {
        "vid": vid, "p0": p0, "p1": p1, "p2": p2, "bary": bary,
        "position": position, "normal": nrm, "t1": t1, "t2": t2,
        "uv": uv, "wo": -dirs, "dirs": dirs,
        "rn_tri": rn_tri, "rt_tri": rt_tri, "uv_tri": uv_tri,
        "n_raw_len": n_len, "tg_raw": tg_raw, "w_len": w_len,
        "frame_ok": frame_ok, "det": det_s, "pv": pv, "tv": tv, "qv": qv,
        "e1": e1, "e2": e2,
    }


def geometry_backward(pose, attrs: dict, g_uv, g_n, g_t1, g_t2):
    """Chain attribute adjoints into (translation, rotation tangent, log-scale)."""
    nrm = attrs["normal"]
    t1 = attrs["t1"]
    bary = attrs["bary"]
    ok = attrs["frame_ok"][:, None]

    # t2 = n x t1
    g_t2 = np.asarray(g_t2)
    g_n = g_n + np.cross(t1, g_t2)
    g_t1 = g_t1 + np.cross(g_t2, nrm)

    # t1 = w / |w|; fallback-frame pixels carry no tangent gradient
    w_len = np.maximum(attrs["w_len"], _TINY)
    g_w = np.where(ok, (g_t1 - _dot(g_t1, t1)[:, None] * t1) / w_len[:, None], 0.0)

    # w = tg_raw - (tg_raw . n) n
    tg_raw = attrs["tg_raw"]
    g_tg = g_w - _dot(g_w, nrm)[:, None] * nrm
    g_n = g_n - _dot(g_w, nrm)[:, None] * tg_raw - _dot(tg_raw, nrm)[:, None] * g_w

    # n = n_raw / |n_raw|
    g_nraw = (g_n - _dot(g_n, nrm)[:, None] * nrm) / attrs["n_raw_len"][:, None]

    # interpolated sums over the triangle corners
    rn_tri = attrs["rn_tri"]
    rt_tri = attrs["rt_tri"]
    uv_tri = attrs["uv_tri"]
    g_b = (
        np.einsum("pij,pj->pi", rn_tri, g_nraw)
        + np.einsum("pij,pj->pi", rt_tri, g_tg)
        + np.einsum("pij,pj->pi", uv_tri, g_uv)
    )
    # rotated per-vertex normals/tangents: d(R m)/d(delta) -> m_w x g
    g_rot = (
        np.cross(rn_tri, g_nraw[:, None, :]) * bary[:, :, None]
        + np.cross(rt_tri, g_tg[:, None, :]) * bary[:, :, None]
    ).sum(axis=(0, 1))

    # barycentrics from the world-space intersection; b0 = 1 - b1 - b2
    g_b1 = g_b[:, 1] - g_b[:, 0]
    g_b2 = g_b[:, 2] - g_b[:, 0]
    det = attrs["det"]
    pv = attrs["pv"]
    tv = attrs["tv"]
    qv = attrs["qv"]
    e1 = attrs["e1"]
    dirs = attrs["dirs"]
    b1 = bary[:, 1]
    b2 = bary[:, 2]

    g_n1 = g_b1 / det
    g_n2 = g_b2 / det
    g_det = -(g_b1 * b1 + g_b2 * b2) / det
    g_tv = g_n1[:, None] * pv
    g_pv = g_n1[:, None] * tv
    g_qv = g_n2[:, None] * dirs
    g_e1 = g_det[:, None] * pv
    g_pv = g_pv + g_det[:, None] * e1
    g_tv = g_tv + np.cross(e1, g_qv)
    g_e1 = g_e1 + np.cross(g_qv, tv)
    g_e2 = np.cross(g_pv, dirs)

    g_p0 = -g_tv - g_e1 - g_e2
    g_p1 = g_e1
    g_p2 = g_e2

    # pool world-vertex adjoints into the pose parameters
    t_pose = pose.translation
    g_t = np.zeros(3)
    g_logs = 0.0
    for p, g_p in ((attrs["p0"], g_p0), (attrs["p1"], g_p1), (attrs["p2"], g_p2)):
        rel = p - t_pose
        g_t += g_p.sum(axis=0)
        g_logs += float(np.einsum("pj,pj->", rel, g_p))
        g_rot = g_rot + np.cross(rel, g_p).sum(axis=0)

    return g_t, g_rot, g_logs
