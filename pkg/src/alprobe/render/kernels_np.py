"""Pure-numpy render kernels (reference backend).

The compiled backend mirrors these routines operation for operation; this
module is the semantic ground truth.  All sample-level math is replayed in
the backward pass from the same counter-based RNG, so the differentiated
estimator is exactly the forward estimator.

Shading weight per VNDF sample collapses to F * G1(n.wi): the sampled pdf
G1(n.wo) * D / (4 n.wo) cancels D and one masking factor of the microfacet
BRDF times the projection cosine.
"""

from __future__ import annotations

import numpy as np

from ..brdf import R_MIN
from ..envlight import bilinear_coords, dir_to_uv
from .rng import sample_uniform

_EPS_COS = 1e-6
_TINY = 1e-30


# ---------------------------------------------------------------------------
# visibility

def raycast(origin: np.ndarray, dirs: np.ndarray, vertices: np.ndarray,
            triangles: np.ndarray) -> np.ndarray:
    """Nearest-hit triangle index per ray (-1 for miss), brute force.

    Rays share one origin (pinhole).  Batched so the (rays, tris)
    temporaries stay within a fixed memory budget.
    """
    n_rays = dirs.shape[0]
    v0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - v0
    e2 = vertices[triangles[:, 2]] - v0
    tv = origin[None, :] - v0  # (F, 3)
    qv = np.cross(tv, e1)  # (F, 3), shared across rays

    n_tris = triangles.shape[0]
    chunk = max(1, int(4e6) // max(n_tris, 1))
    best_t = np.full(n_rays, np.inf)
    best_tri = np.full(n_rays, -1, dtype=np.int32)

    for s in range(0, n_rays, chunk):
        d = dirs[s : s + chunk]  # (n, 3)
        pv = np.cross(d[:, None, :], e2[None, :, :])  # (n, F, 3)
        det = np.einsum("fj,nfj->nf", e1, pv)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            b1 = np.einsum("fj,nfj->nf", tv, pv) * inv
            b2 = np.einsum("nj,fj->nf", d, qv) * inv
            t = np.einsum("fj,fj->f", e2, qv)[None, :] * inv
        ok = (
            (np.abs(det) > 1e-12)
            & (b1 >= -1e-10)
            & (b2 >= -1e-10)
            & (b1 + b2 <= 1.0 + 1e-10)
            & (t > 1e-9)
        )
        t = np.where(ok, t, np.inf)
        f = np.argmin(t, axis=1)
        rows = np.arange(t.shape[0])
        tmin = t[rows, f]
        hit = np.isfinite(tmin)
        best_t[s : s + chunk] = np.where(hit, tmin, np.inf)
        best_tri[s : s + chunk] = np.where(hit, f.astype(np.int32), -1)

    return best_tri


# ---------------------------------------------------------------------------
# texture helpers

def tex_lookup(tex: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Bilinear texture fetch at (P, 2) uv, wrap-u / clamp-v."""
    h, w = tex.shape[:2]
    i0, i1, j0, j1, fx, fy = bilinear_coords(uv[:, 0], uv[:, 1], w, h)
    if tex.ndim == 3:
        fx = fx[:, None]
        fy = fy[:, None]
    return (
        tex[i0, j0] * (1 - fx) * (1 - fy)
        + tex[i0, j1] * fx * (1 - fy)
        + tex[i1, j0] * (1 - fx) * fy
        + tex[i1, j1] * fx * fy
    )


def scatter_bilinear(grad: np.ndarray, uv: np.ndarray, values: np.ndarray) -> None:
    """Accumulate per-pixel adjoints into texel gradients (transpose of tex_lookup)."""
    h, w = grad.shape[:2]
    i0, i1, j0, j1, fx, fy = bilinear_coords(uv[:, 0], uv[:, 1], w, h)
    if grad.ndim == 3 and values.ndim == 2:
        fx = fx[:, None]
        fy = fy[:, None]
    np.add.at(grad, (i0, j0), values * (1 - fx) * (1 - fy))
    np.add.at(grad, (i0, j1), values * fx * (1 - fy))
    np.add.at(grad, (i1, j0), values * (1 - fx) * fy)
    np.add.at(grad, (i1, j1), values * fx * fy)


def tex_uv_gradient(tex: np.ndarray, uv: np.ndarray, g_val: np.ndarray) -> np.ndarray:
    """d(adjoint . lookup)/d(uv) for a bilinear fetch; (P, 2)."""
    h, w = tex.shape[:2]
    i0, i1, j0, j1, fx, fy = bilinear_coords(uv[:, 0], uv[:, 1], w, h)
    if tex.ndim == 3:
        du = w * (
            (1 - fy)[:, None] * (tex[i0, j1] - tex[i0, j0])
            + fy[:, None] * (tex[i1, j1] - tex[i1, j0])
        )
        dv = h * (
            (1 - fx)[:, None] * (tex[i1, j0] - tex[i0, j0])
            + fx[:, None] * (tex[i1, j1] - tex[i0, j1])
        )
        return np.stack([(g_val * du).sum(axis=1), (g_val * dv).sum(axis=1)], axis=-1)
    du = w * ((1 - fy) * (tex[i0, j1] - tex[i0, j0]) + fy * (tex[i1, j1] - tex[i1, j0]))
    dv = h * ((1 - fx) * (tex[i1, j0] - tex[i0, j0]) + fx * (tex[i1, j1] - tex[i0, j1]))
    return np.stack([g_val * du, g_val * dv], axis=-1)


# ---------------------------------------------------------------------------
# VNDF sampling (vectorized; mirrors brdf.sample_vndf)

def _vndf_local(alpha, wo_loc, u1, u2):
    """Sampled half-vector in the shading frame plus forward intermediates."""
    vu = np.stack([alpha * wo_loc[:, 0], alpha * wo_loc[:, 1], wo_loc[:, 2]], axis=-1)
    vu_len = np.sqrt(np.einsum("pj,pj->p", vu, vu))
    vh = vu / np.maximum(vu_len, _TINY)[:, None]

    lensq = vh[:, 0] ** 2 + vh[:, 1] ** 2
    inv_len = 1.0 / np.sqrt(np.maximum(lensq, _TINY))
    t1v = np.where(
        (lensq > 1e-20)[:, None],
        np.stack([-vh[:, 1] * inv_len, vh[:, 0] * inv_len, np.zeros_like(inv_len)], -1),
        np.array([1.0, 0.0, 0.0]),
    )
    t2v = np.cross(vh, t1v)

    rho = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    p1 = rho * np.cos(phi)
    sinp = rho * np.sin(phi)
    s = 0.5 * (1.0 + vh[:, 2])
    root = np.sqrt(np.maximum(1.0 - p1 * p1, 0.0))
    p2 = (1.0 - s) * root + s * sinp
    pz = np.sqrt(np.maximum(1.0 - p1 * p1 - p2 * p2, 0.0))

    nh = p1[:, None] * t1v + p2[:, None] * t2v + pz[:, None] * vh
    hu = np.stack(
        [alpha * nh[:, 0], alpha * nh[:, 1], np.maximum(nh[:, 2], 0.0)], axis=-1
    )
    hu_len = np.sqrt(np.einsum("pj,pj->p", hu, hu))
    h = hu / np.maximum(hu_len, _TINY)[:, None]
    return {
        "vu": vu, "vu_len": vu_len, "vh": vh, "lensq": lensq, "inv_len": inv_len,
        "t1v": t1v, "t2v": t2v, "p1": p1, "sinp": sinp, "s": s, "root": root,
        "p2": p2, "pz": pz, "nh": nh, "hu": hu, "hu_len": hu_len, "h": h,
    }


def _g1(u4, c):
    q = np.sqrt(u4 + (1.0 - u4) * c * c)
    return 2.0 * c / np.maximum(c + q, _TINY), q


# ---------------------------------------------------------------------------
# forward shading

def shade_forward(pids, wo, nrm, t1, t2, uv, albedo, rough, vis, env_rad,
                  spp: int, seed: int) -> np.ndarray:
    """Per-pixel outgoing radiance (P, 3), visibility-modulated, pre-coverage."""
    p = pids.shape[0]
    alb = tex_lookup(albedo, uv)
    r = np.clip(tex_lookup(rough, uv), R_MIN, 1.0)
    v = tex_lookup(vis, uv)
    alpha = r * r
    u4 = alpha * alpha

    wo_loc = np.stack(
        [np.einsum("pj,pj->p", wo, t1),
         np.einsum("pj,pj->p", wo, t2),
         np.einsum("pj,pj->p", wo, nrm)], axis=-1
    )
    active = wo_loc[:, 2] > _EPS_COS

    he, we = env_rad.shape[:2]
    accum = np.zeros((p, 3))
    for k in range(spp):
        u1 = sample_uniform(seed, pids, k, 0)
        u2 = sample_uniform(seed, pids, k, 1)
        fw = _vndf_local(alpha, wo_loc, u1, u2)
        h = fw["h"]
        c_ho = np.einsum("pj,pj->p", wo_loc, h)
        wi = 2.0 * c_ho[:, None] * h - wo_loc
        ci = wi[:, 2]
        valid = active & (ci > 0.0)

        # expression structure mirrors shade_backward so the replayed
        # forward value is bit-identical
        one_m = (1.0 - c_ho) ** 4
        fres = alb + (1.0 - alb) * ((1.0 - c_ho) * one_m)[:, None]
        g1i, _ = _g1(u4, np.maximum(ci, _TINY))
        wiw = wi[:, 0:1] * t1 + wi[:, 1:2] * t2 + wi[:, 2:3] * nrm
        ue, ve = dir_to_uv(wiw)
        i0, i1, j0, j1, fx, fy = bilinear_coords(ue, ve, we, he)
        w00 = (1 - fx) * (1 - fy)
        w01 = fx * (1 - fy)
        w10 = (1 - fx) * fy
        w11 = fx * fy
        rad = (
            env_rad[i0, j0] * w00[:, None]
            + env_rad[i0, j1] * w01[:, None]
            + env_rad[i1, j0] * w10[:, None]
            + env_rad[i1, j1] * w11[:, None]
        )
        accum += np.where(valid[:, None], rad * fres * g1i[:, None], 0.0)

    return v[:, None] * accum / spp


# ---------------------------------------------------------------------------
# backward shading

def shade_backward(pids, wo, nrm, t1, t2, uv, albedo, rough, vis,
                   env_rad, env_sig, spp: int, seed: int, g_s) -> dict:
    """Replay the forward estimator and accumulate adjoints.

    ``g_s`` is the adjoint of the per-pixel radiance S (coverage already
    folded in by the caller).  Returns the forward S plus gradients at the
    geometry-attribute level; the caller chains uv/normal/tangent adjoints
    into barycentrics and pose.
    """
    p = pids.shape[0]
    alb = tex_lookup(albedo, uv)
    r_tex = tex_lookup(rough, uv)
    r = np.clip(r_tex, R_MIN, 1.0)
    v = tex_lookup(vis, uv)
    alpha = r * r
    u4 = alpha * alpha

    wo_loc = np.stack(
        [np.einsum("pj,pj->p", wo, t1),
         np.einsum("pj,pj->p", wo, t2),
         np.einsum("pj,pj->p", wo, nrm)], axis=-1
    )
    active = wo_loc[:, 2] > _EPS_COS

    accum = np.zeros((p, 3))
    g_env_theta = np.zeros_like(env_sig)
    g_alb = np.zeros((p, 3))
    g_r = np.zeros(p)
    g_wo_loc = np.zeros((p, 3))
    g_n = np.zeros((p, 3))
    g_t1 = np.zeros((p, 3))
    g_t2 = np.zeros((p, 3))

    g_term = v[:, None] * g_s / spp  # S = v * mean_k(term)

    he, we = env_rad.shape[:2]
    for k in range(spp):
        u1 = sample_uniform(seed, pids, k, 0)
        u2 = sample_uniform(seed, pids, k, 1)
        fw = _vndf_local(alpha, wo_loc, u1, u2)
        h = fw["h"]
        c_ho = np.einsum("pj,pj->p", wo_loc, h)
        wi = 2.0 * c_ho[:, None] * h - wo_loc
        ci = wi[:, 2]
        valid = active & (ci > 0.0)
        vm = valid[:, None]

        one_m = (1.0 - c_ho) ** 4
        fres = alb + (1.0 - alb) * ((1.0 - c_ho) * one_m)[:, None]
        ci_s = np.maximum(ci, _TINY)
        g1i, q = _g1(u4, ci_s)
        wiw = wi[:, 0:1] * t1 + wi[:, 1:2] * t2 + wi[:, 2:3] * nrm
        ue, ve = dir_to_uv(wiw)
        i0, i1, j0, j1, fx, fy = bilinear_coords(ue, ve, we, he)
        w00 = (1 - fx) * (1 - fy)
        w01 = fx * (1 - fy)
        w10 = (1 - fx) * fy
        w11 = fx * fy
        rad = (
            env_rad[i0, j0] * w00[:, None]
            + env_rad[i0, j1] * w01[:, None]
            + env_rad[i1, j0] * w10[:, None]
            + env_rad[i1, j1] * w11[:, None]
        )
        accum += np.where(vm, rad * fres * g1i[:, None], 0.0)

        # ---- adjoints for sample k (all quantities masked by validity)
        g_l = np.where(vm, g_term * fres * g1i[:, None], 0.0)
        g_f = np.where(vm, g_term * rad * g1i[:, None], 0.0)
        g_g1 = np.where(valid, np.einsum("pj,pj->p", g_term, rad * fres), 0.0)

        # environment texels: L = sum w_t softplus(theta_t)
        np.add.at(g_env_theta, (i0, j0), g_l * (w00[:, None] * env_sig[i0, j0]))
        np.add.at(g_env_theta, (i0, j1), g_l * (w01[:, None] * env_sig[i0, j1]))
        np.add.at(g_env_theta, (i1, j0), g_l * (w10[:, None] * env_sig[i1, j0]))
        np.add.at(g_env_theta, (i1, j1), g_l * (w11[:, None] * env_sig[i1, j1]))

        # env uv -> incident direction
        due = we * (
            (1 - fy)[:, None] * (env_rad[i0, j1] - env_rad[i0, j0])
            + fy[:, None] * (env_rad[i1, j1] - env_rad[i1, j0])
        )
        dve = he * (
            (1 - fx)[:, None] * (env_rad[i1, j0] - env_rad[i0, j0])
            + fx[:, None] * (env_rad[i1, j1] - env_rad[i0, j1])
        )
        g_ue = np.einsum("pj,pj->p", g_l, due)
        g_ve = np.einsum("pj,pj->p", g_l, dve)
        horiz = wiw[:, 0] ** 2 + wiw[:, 2] ** 2
        inv_h = 1.0 / np.maximum(horiz, 1e-16)
        sin_v = np.sqrt(np.maximum(1.0 - wiw[:, 1] ** 2, 1e-16))
        g_wiw = np.stack(
            [
                g_ue * (-wiw[:, 2]) * inv_h / (2.0 * np.pi),
                -g_ve / (np.pi * sin_v),
                g_ue * wiw[:, 0] * inv_h / (2.0 * np.pi),
            ],
            axis=-1,
        )
        g_wiw = np.where((horiz > 1e-16)[:, None] & vm, g_wiw, 0.0)

        # wiw = wi.x t1 + wi.y t2 + wi.z n
        g_t1 += wi[:, 0:1] * g_wiw
        g_t2 += wi[:, 1:2] * g_wiw
        g_n += wi[:, 2:3] * g_wiw
        g_wi = np.stack(
            [np.einsum("pj,pj->p", g_wiw, t1),
             np.einsum("pj,pj->p", g_wiw, t2),
             np.einsum("pj,pj->p", g_wiw, nrm)], axis=-1
        )

        # masking term G1(ci; r^4)
        denom = np.maximum(q * (ci_s + q) ** 2, _TINY)
        g_wi[:, 2] += g_g1 * 2.0 * u4 / denom
        g_u4 = g_g1 * (-ci_s * (1.0 - ci_s * ci_s) / denom)
        g_r += np.where(valid, 4.0 * r**3 * g_u4, 0.0)

        # Fresnel
        g_alb += np.where(vm, g_f * (1.0 - ((1.0 - c_ho) * one_m))[:, None], 0.0)
        g_cho = np.where(
            valid,
            np.einsum("pj,pj->p", g_f, -(5.0 * one_m)[:, None] * (1.0 - alb)),
            0.0,
        )

        # reflection wi = 2 (wo.h) h - wo
        g_c = 2.0 * np.einsum("pj,pj->p", g_wi, h) + g_cho
        g_h = g_c[:, None] * wo_loc + 2.0 * c_ho[:, None] * g_wi
        g_wo_loc += np.where(vm, g_c[:, None] * h - g_wi, 0.0)

        # half-vector construction backward
        g_al, g_wo_smp = _vndf_local_backward(alpha, wo_loc, fw, np.where(vm, g_h, 0.0))
        g_r += np.where(valid, 2.0 * r * g_al, 0.0)
        g_wo_loc += np.where(vm, g_wo_smp, 0.0)

    s_px = v[:, None] * accum / spp

    # pixel-level chains
    g_vis = np.einsum("pj,pj->p", g_s, accum / spp)
    g_t1 += g_wo_loc[:, 0:1] * wo
    g_t2 += g_wo_loc[:, 1:2] * wo
    g_n += g_wo_loc[:, 2:3] * wo
    g_r *= (r_tex > R_MIN) & (r_tex < 1.0)  # clamp gate

    return {
        "s": s_px,
        "g_env_theta": g_env_theta,
        "g_albedo_px": g_alb,
        "g_rough_px": g_r,
        "g_vis_px": g_vis,
        "g_n": g_n,
        "g_t1": g_t1,
        "g_t2": g_t2,
    }


def _vndf_local_backward(alpha, wo_loc, fw, g_h):
    """Adjoint of _vndf_local: returns (g_alpha, g_wo_loc) per sample."""
    h = fw["h"]
    hu_len = np.maximum(fw["hu_len"], _TINY)
    g_hu = (g_h - np.einsum("pj,pj->p", g_h, h)[:, None] * h) / hu_len[:, None]

    nh = fw["nh"]
    g_alpha = g_hu[:, 0] * nh[:, 0] + g_hu[:, 1] * nh[:, 1]
    g_nh = np.stack(
        [alpha * g_hu[:, 0],
         alpha * g_hu[:, 1],
         np.where(nh[:, 2] > 0.0, g_hu[:, 2], 0.0)], axis=-1
    )

    t1v, t2v, vh = fw["t1v"], fw["t2v"], fw["vh"]
    p2, pz = fw["p2"], fw["pz"]
    g_t1v = fw["p1"][:, None] * g_nh
    g_t2v = p2[:, None] * g_nh
    g_vh = pz[:, None] * g_nh
    g_pz = np.einsum("pj,pj->p", g_nh, vh)
    g_p2 = np.einsum("pj,pj->p", g_nh, t2v) + np.where(
        pz > 1e-9, -g_pz * p2 / np.maximum(pz, _TINY), 0.0
    )
    g_s = g_p2 * (fw["sinp"] - fw["root"])
    g_vh[:, 2] += 0.5 * g_s

    # t2v = vh x t1v
    g_vh += np.cross(t1v, g_t2v)
    g_t1v += np.cross(g_t2v, vh)

    # t1v = (-vh.y, vh.x, 0) / sqrt(lensq); constant fallback has no gradient
    has_t = fw["lensq"] > 1e-20
    inv_len = fw["inv_len"]
    g_m = (g_t1v - np.einsum("pj,pj->p", g_t1v, t1v)[:, None] * t1v) * inv_len[:, None]
    g_vh[:, 0] += np.where(has_t, g_m[:, 1], 0.0)
    g_vh[:, 1] += np.where(has_t, -g_m[:, 0], 0.0)

    # vh = normalize(alpha wo.x, alpha wo.y, wo.z)
    vu_len = np.maximum(fw["vu_len"], _TINY)
    g_vu = (g_vh - np.einsum("pj,pj->p", g_vh, vh)[:, None] * vh) / vu_len[:, None]
    g_alpha += g_vu[:, 0] * wo_loc[:, 0] + g_vu[:, 1] * wo_loc[:, 1]
    g_wo = np.stack(
        [alpha * g_vu[:, 0], alpha * g_vu[:, 1], g_vu[:, 2]], axis=-1
    )
    return g_alpha, g_wo


# ---------------------------------------------------------------------------
# confidence support

def sample_directions(pids, wo, nrm, t1, t2, uv, rough, spp: int, seed: int):
    """World-space incident directions shading would draw; (M, 3)."""
    r = np.clip(tex_lookup(rough, uv), R_MIN, 1.0)
    alpha = r * r
    wo_loc = np.stack(
        [np.einsum("pj,pj->p", wo, t1),
         np.einsum("pj,pj->p", wo, t2),
         np.einsum("pj,pj->p", wo, nrm)], axis=-1
    )
    active = wo_loc[:, 2] > _EPS_COS
    out = []
    for k in range(spp):
        u1 = sample_uniform(seed, pids, k, 0)
        u2 = sample_uniform(seed, pids, k, 1)
        h = _vndf_local(alpha, wo_loc, u1, u2)["h"]
        c_ho = np.einsum("pj,pj->p", wo_loc, h)
        wi = 2.0 * c_ho[:, None] * h - wo_loc
        valid = active & (wi[:, 2] > 0.0)
        wiw = wi[:, 0:1] * t1 + wi[:, 1:2] * t2 + wi[:, 2:3] * nrm
        out.append(wiw[valid])
    if not out:
        return np.zeros((0, 3))
    return np.concatenate(out, axis=0)
