"""Silhouette extraction and soft coverage.

Coverage feathers the inside of the mask: a hit pixel's coverage ramps
linearly from 0 at the projected silhouette to 1 at ``aa_width`` pixels
inside it.  That keeps the mask continuous under pose changes (a pixel
flips hit/miss exactly when its edge distance crosses zero) and provides
the pose gradient of the mask.  Occluded silhouette edges are not culled,
which is exact for convex shapes and a mild approximation otherwise.
"""

from __future__ import annotations

import numpy as np

from ..core.mesh import weld_ids
from ..core.quaternion import to_matrix

_EDGE_CACHE_ATTR = "_silhouette_edge_cache"


def edge_table(mesh):
    """Undirected edges on welded vertices.

    Returns (edge_verts (E, 2) original vertex ids, edge_faces (E, 2) with
    -1 for boundary edges).  Cached on the mesh instance.
    """
    cached = getattr(mesh, _EDGE_CACHE_ATTR, None)
    if cached is not None:
        return cached
    weld = weld_ids(mesh.vertices)
    edges: dict[tuple[int, int], list] = {}
    for f, tri in enumerate(mesh.triangles):
        for c in range(3):
            a, b = int(tri[c]), int(tri[(c + 1) % 3])
            key = (weld[a], weld[b]) if weld[a] < weld[b] else (weld[b], weld[a])
            rec = edges.get(key)
            if rec is None:
                edges[key] = [a, b, f, -1]
            elif rec[3] == -1:
                rec[3] = f
            # non-manifold third face: keep the first two, silhouette is
            # heuristic there anyway
    if edges:
        arr = np.array(list(edges.values()), dtype=np.int64)
        result = (arr[:, :2].copy(), arr[:, 2:].copy())
    else:
        result = (np.zeros((0, 2), np.int64), np.zeros((0, 2), np.int64))
    object.__setattr__(mesh, _EDGE_CACHE_ATTR, result)
    return result


def silhouette_segments(mesh, pose, cam):
    """Project silhouette edges to screen space.

    Returns (segments (E, 2, 2) pixel coords, vert_ids (E, 2) original
    vertex indices).  Edges with an endpoint behind the camera are dropped.
    """
    edge_verts, edge_faces = edge_table(mesh)
    if edge_verts.shape[0] == 0:
        return np.zeros((0, 2, 2)), np.zeros((0, 2), np.int64)

    r_obj = to_matrix(pose.rotation)
    cam_obj = r_obj.T @ (cam.center - pose.translation) / pose.scale
    fn = mesh.face_normals()
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    front = np.einsum("ij,ij->i", fn, cam_obj[None, :] - v0) > 0.0

    f0 = edge_faces[:, 0]
    f1 = edge_faces[:, 1]
    boundary = f1 < 0
    keep = np.where(
        boundary,
        front[f0],
        front[f0] != front[np.maximum(f1, 0)],
    )
    edge_verts = edge_verts[keep]
    if edge_verts.shape[0] == 0:
        return np.zeros((0, 2, 2)), np.zeros((0, 2), np.int64)

    world = pose.transform_point(mesh.vertices[edge_verts.ravel()])
    r_cw = to_matrix(cam.rotation)
    xc = world @ r_cw.T + cam.translation
    depth = -xc[:, 2]
    safe = np.maximum(depth, 1e-6)
    uu = cam.cx + cam.focal * xc[:, 0] / safe
    vv = cam.cy - cam.focal * xc[:, 1] / safe
    segs = np.stack([uu, vv], axis=-1).reshape(-1, 2, 2)
    ok = (depth.reshape(-1, 2) > 1e-6).all(axis=1)
    return segs[ok], edge_verts[ok]


def edge_distances(hit: np.ndarray, segments: np.ndarray):
    """Per hit-pixel distance to the nearest silhouette segment.

    Returns (dist (H, W), seg_idx (H, W) int32, seg_t (H, W)); miss pixels
    carry dist = inf and seg_idx = -1.
    """
    h, w = hit.shape
    dist = np.full((h, w), np.inf)
    seg_idx = np.full((h, w), -1, dtype=np.int32)
    seg_t = np.zeros((h, w))
    if segments.shape[0] == 0 or not hit.any():
        return dist, seg_idx, seg_t

    ii, jj = np.nonzero(hit)
    p = np.stack([jj + 0.5, ii + 0.5], axis=-1)  # (P, 2) pixel centers
    a = segments[:, 0]
    ab = segments[:, 1] - a
    len2 = np.maximum(np.einsum("ej,ej->e", ab, ab), 1e-30)

    best_d2 = np.full(p.shape[0], np.inf)
    best_e = np.full(p.shape[0], -1, dtype=np.int32)
    best_t = np.zeros(p.shape[0])
    # chunk pixels so the (P, E) temporaries stay small
    for s in range(0, p.shape[0], 8192):
        pc = p[s : s + 8192]
        rel = pc[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pej,ej->pe", rel, ab) / len2, 0.0, 1.0)
        dvec = rel - t[..., None] * ab[None, :, :]
        d2 = np.einsum("pej,pej->pe", dvec, dvec)
        e = np.argmin(d2, axis=1)
        rows = np.arange(pc.shape[0])
        best_d2[s : s + 8192] = d2[rows, e]
        best_e[s : s + 8192] = e
        best_t[s : s + 8192] = t[rows, e]

    dist[ii, jj] = np.sqrt(best_d2)
    seg_idx[ii, jj] = best_e
    seg_t[ii, jj] = best_t
    return dist, seg_idx, seg_t


def coverage_pose_gradient(
    g_cov, hit, dist, seg_idx, seg_t, segments, vert_ids, mesh, pose, cam, aa_width
):
    """Backpropagate coverage adjoints to (translation, rotation tangent, log-scale).

    Only pixels inside the feather band carry gradient; the nearest-segment
    assignment is held fixed (envelope of the min).
    """
    g_t = np.zeros(3)
    g_rot = np.zeros(3)
    g_logs = 0.0
    band = hit & (dist > 1e-9) & (dist < aa_width) & (seg_idx >= 0)
    if not band.any() or segments.shape[0] == 0:
        return g_t, g_rot, g_logs

    ii, jj = np.nonzero(band)
    p = np.stack([jj + 0.5, ii + 0.5], axis=-1)
    e = seg_idx[ii, jj]
    t = seg_t[ii, jj][:, None]
    a = segments[e, 0]
    b = segments[e, 1]
    q = a + t * (b - a)
    u_hat = (p - q) / dist[ii, jj][:, None]
    g_d = (g_cov[ii, jj] / aa_width)[:, None]

    g_screen = np.zeros((segments.shape[0], 2, 2))
    np.add.at(g_screen, (e, 0), -(1.0 - t) * u_hat * g_d)
    np.add.at(g_screen, (e, 1), -t * u_hat * g_d)

    used = np.nonzero(np.abs(g_screen).sum(axis=2).ravel())[0]
    if used.size == 0:
        return g_t, g_rot, g_logs
    vid = vert_ids.ravel()[used]
    g_uv = g_screen.reshape(-1, 2)[used]

    world = pose.transform_point(mesh.vertices[vid])
    r_cw = to_matrix(cam.rotation)
    xc = world @ r_cw.T + cam.translation
    depth = -xc[:, 2]
    f = cam.focal
    # u = cx + f x/depth, v = cy - f y/depth, depth = -z
    g_xc = np.stack(
        [
            f / depth * g_uv[:, 0],
            -f / depth * g_uv[:, 1],
            (f * xc[:, 0] / depth**2) * g_uv[:, 0]
            - (f * xc[:, 1] / depth**2) * g_uv[:, 1],
        ],
        axis=-1,
    )
    g_xw = g_xc @ r_cw
    rel = world - pose.translation
    g_t += g_xw.sum(axis=0)
    g_logs += float(np.einsum("pj,pj->", rel, g_xw))
    g_rot += np.cross(rel, g_xw).sum(axis=0)
    return g_t, g_rot, g_logs
