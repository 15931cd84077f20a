# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled render kernels.

Scalar transcription of kernels_np; that module is the semantic reference.
Every routine releases the GIL so the backend can dispatch pixel tiles to a
thread pool.  The RNG reproduces the numpy stream bit for bit.
"""

from libc.math cimport sqrt, fabs, atan2, acos, cos, sin, floor, fmax, fmin, M_PI
from libc.stdint cimport uint64_t, int64_t

cdef double R_MIN = 0.03
cdef double EPS_COS = 1e-6
cdef double TINY = 1e-30


# ---------------------------------------------------------------------------
# RNG (murmur3 finalizer, identical to render.rng)

cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = z ^ (z >> 33)
    z = z * <uint64_t>0xFF51AFD7ED558CCD
    z = z ^ (z >> 33)
    z = z * <uint64_t>0xC4CEB9FE1A85EC53
    return z ^ (z >> 33)


cdef inline double _u01(uint64_t seed, uint64_t pid, uint64_t k, uint64_t dim) noexcept nogil:
    cdef uint64_t h = _mix(seed + <uint64_t>0x9E3779B97F4A7C15)
    h = _mix(h ^ (pid + <uint64_t>0xBF58476D1CE4E5B9))
    h = _mix(h ^ (k * <uint64_t>2 + dim + <uint64_t>0x94D049BB133111EB))
    return <double>(h >> 11) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# shared small helpers

cdef inline void _bilin_idx(double u, double v, int w, int h,
                            int* j0, int* j1, int* i0, int* i1,
                            double* fx, double* fy) noexcept nogil:
    cdef double x = u * w - 0.5
    cdef double y = v * h - 0.5
    cdef double x0 = floor(x)
    cdef double y0 = floor(y)
    fx[0] = x - x0
    fy[0] = y - y0
    cdef long jj = <long>x0
    j0[0] = <int>(((jj % w) + w) % w)
    j1[0] = <int>((((jj + 1) % w) + w) % w)
    cdef long ii = <long>y0
    if ii < 0:
        ii = 0
    elif ii > h - 1:
        ii = h - 1
    i0[0] = <int>ii
    cdef long ii1 = <long>y0 + 1
    if ii1 < 0:
        ii1 = 0
    elif ii1 > h - 1:
        ii1 = h - 1
    i1[0] = <int>ii1


cdef inline double _g1_val(double u4, double c) noexcept nogil:
    cdef double q = sqrt(u4 + (1.0 - u4) * c * c)
    return 2.0 * c / fmax(c + q, TINY)


# ---------------------------------------------------------------------------
# BVH raycast

def raycast(const double[::1] origin, const double[:, ::1] dirs,
            const double[:, ::1] verts, const int[:, ::1] tris,
            const double[:, ::1] bmin, const double[:, ::1] bmax,
            const int[::1] left, const int[::1] right,
            const int[::1] start, const int[::1] count,
            const int[::1] order, int[::1] out):
    cdef Py_ssize_t n = dirs.shape[0]
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _trace(origin, dirs[i, 0], dirs[i, 1], dirs[i, 2],
                            verts, tris, bmin, bmax, left, right, start,
                            count, order)


cdef int _trace(const double[::1] o, double dx, double dy, double dz,
                const double[:, ::1] verts, const int[:, ::1] tris,
                const double[:, ::1] bmin, const double[:, ::1] bmax,
                const int[::1] left, const int[::1] right,
                const int[::1] start, const int[::1] count,
                const int[::1] order) noexcept nogil:
    cdef double inv[3]
    cdef double og[3]
    cdef int stack[128]
    cdef int sp = 0
    cdef int node, f, tri, best_tri, c0
    cdef Py_ssize_t a
    cdef double best_t = 1e300
    cdef double t0, t1, tn, tf, tmp
    cdef int ax
    cdef double e1x, e1y, e1z, e2x, e2y, e2z
    cdef double pvx, pvy, pvz, det, invd, tvx, tvy, tvz
    cdef double qvx, qvy, qvz, b1, b2, t
    cdef double v0x, v0y, v0z

    og[0] = o[0]; og[1] = o[1]; og[2] = o[2]
    inv[0] = 1.0 / dx if dx != 0.0 else 1e300
    inv[1] = 1.0 / dy if dy != 0.0 else 1e300
    inv[2] = 1.0 / dz if dz != 0.0 else 1e300

    best_tri = -1
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        # slab test
        tn = -1e300
        tf = 1e300
        for ax in range(3):
            t0 = (bmin[node, ax] - og[ax]) * inv[ax]
            t1 = (bmax[node, ax] - og[ax]) * inv[ax]
            if t0 > t1:
                tmp = t0; t0 = t1; t1 = tmp
            if t0 > tn:
                tn = t0
            if t1 < tf:
                tf = t1
        if tn > tf or tf < 0.0 or tn > best_t:
            continue
        c0 = count[node]
        if c0 > 0:
            for a in range(start[node], start[node] + c0):
                tri = order[a]
                v0x = verts[tris[tri, 0], 0]
                v0y = verts[tris[tri, 0], 1]
                v0z = verts[tris[tri, 0], 2]
                e1x = verts[tris[tri, 1], 0] - v0x
                e1y = verts[tris[tri, 1], 1] - v0y
                e1z = verts[tris[tri, 1], 2] - v0z
                e2x = verts[tris[tri, 2], 0] - v0x
                e2y = verts[tris[tri, 2], 1] - v0y
                e2z = verts[tris[tri, 2], 2] - v0z
                pvx = dy * e2z - dz * e2y
                pvy = dz * e2x - dx * e2z
                pvz = dx * e2y - dy * e2x
                det = e1x * pvx + e1y * pvy + e1z * pvz
                if fabs(det) <= 1e-12:
                    continue
                invd = 1.0 / det
                tvx = og[0] - v0x
                tvy = og[1] - v0y
                tvz = og[2] - v0z
                b1 = (tvx * pvx + tvy * pvy + tvz * pvz) * invd
                if b1 < -1e-10:
                    continue
                qvx = tvy * e1z - tvz * e1y
                qvy = tvz * e1x - tvx * e1z
                qvz = tvx * e1y - tvy * e1x
                b2 = (dx * qvx + dy * qvy + dz * qvz) * invd
                if b2 < -1e-10 or b1 + b2 > 1.0 + 1e-10:
                    continue
                t = (e2x * qvx + e2y * qvy + e2z * qvz) * invd
                if t > 1e-9 and t < best_t:
                    best_t = t
                    best_tri = tri
        else:
            stack[sp] = left[node]; sp += 1
            stack[sp] = right[node]; sp += 1
    return best_tri


# ---------------------------------------------------------------------------
# shading

cdef struct VndfFwd:
    double vu[3]
    double vu_len
    double vh[3]
    double lensq
    double inv_len
    double t1v[3]
    double t2v[3]
    double p1
    double sinp
    double s
    double root
    double p2
    double pz
    double nh[3]
    double hu[3]
    double hu_len
    double h[3]


cdef inline void _vndf_fwd(double alpha, const double* wo, double u1, double u2,
                           VndfFwd* f) noexcept nogil:
    cdef double n, rho, phi
    f.vu[0] = alpha * wo[0]
    f.vu[1] = alpha * wo[1]
    f.vu[2] = wo[2]
    f.vu_len = sqrt(f.vu[0] * f.vu[0] + f.vu[1] * f.vu[1] + f.vu[2] * f.vu[2])
    n = fmax(f.vu_len, TINY)
    f.vh[0] = f.vu[0] / n
    f.vh[1] = f.vu[1] / n
    f.vh[2] = f.vu[2] / n

    f.lensq = f.vh[0] * f.vh[0] + f.vh[1] * f.vh[1]
    f.inv_len = 1.0 / sqrt(fmax(f.lensq, TINY))
    if f.lensq > 1e-20:
        f.t1v[0] = -f.vh[1] * f.inv_len
        f.t1v[1] = f.vh[0] * f.inv_len
        f.t1v[2] = 0.0
    else:
        f.t1v[0] = 1.0
        f.t1v[1] = 0.0
        f.t1v[2] = 0.0
    f.t2v[0] = f.vh[1] * f.t1v[2] - f.vh[2] * f.t1v[1]
    f.t2v[1] = f.vh[2] * f.t1v[0] - f.vh[0] * f.t1v[2]
    f.t2v[2] = f.vh[0] * f.t1v[1] - f.vh[1] * f.t1v[0]

    rho = sqrt(u1)
    phi = 2.0 * M_PI * u2
    f.p1 = rho * cos(phi)
    f.sinp = rho * sin(phi)
    f.s = 0.5 * (1.0 + f.vh[2])
    f.root = sqrt(fmax(1.0 - f.p1 * f.p1, 0.0))
    f.p2 = (1.0 - f.s) * f.root + f.s * f.sinp
    f.pz = sqrt(fmax(1.0 - f.p1 * f.p1 - f.p2 * f.p2, 0.0))

    f.nh[0] = f.p1 * f.t1v[0] + f.p2 * f.t2v[0] + f.pz * f.vh[0]
    f.nh[1] = f.p1 * f.t1v[1] + f.p2 * f.t2v[1] + f.pz * f.vh[1]
    f.nh[2] = f.p1 * f.t1v[2] + f.p2 * f.t2v[2] + f.pz * f.vh[2]
    f.hu[0] = alpha * f.nh[0]
    f.hu[1] = alpha * f.nh[1]
    f.hu[2] = fmax(f.nh[2], 0.0)
    f.hu_len = sqrt(f.hu[0] * f.hu[0] + f.hu[1] * f.hu[1] + f.hu[2] * f.hu[2])
    n = fmax(f.hu_len, TINY)
    f.h[0] = f.hu[0] / n
    f.h[1] = f.hu[1] / n
    f.h[2] = f.hu[2] / n


cdef inline void _vndf_bwd(double alpha, const double* wo, VndfFwd* f,
                           const double* g_h, double* g_alpha_out,
                           double* g_wo_out) noexcept nogil:
    cdef double hu_len = fmax(f.hu_len, TINY)
    cdef double dp, g_alpha
    cdef double g_hu[3]
    cdef double g_nh[3]
    cdef double g_t1v[3]
    cdef double g_t2v[3]
    cdef double g_vh[3]
    cdef double g_m[3]
    cdef double g_vu[3]
    cdef double g_pz, g_p2, g_s
    cdef int c

    dp = g_h[0] * f.h[0] + g_h[1] * f.h[1] + g_h[2] * f.h[2]
    for c in range(3):
        g_hu[c] = (g_h[c] - dp * f.h[c]) / hu_len

    g_alpha = g_hu[0] * f.nh[0] + g_hu[1] * f.nh[1]
    g_nh[0] = alpha * g_hu[0]
    g_nh[1] = alpha * g_hu[1]
    g_nh[2] = g_hu[2] if f.nh[2] > 0.0 else 0.0

    for c in range(3):
        g_t1v[c] = f.p1 * g_nh[c]
        g_t2v[c] = f.p2 * g_nh[c]
        g_vh[c] = f.pz * g_nh[c]
    g_pz = g_nh[0] * f.vh[0] + g_nh[1] * f.vh[1] + g_nh[2] * f.vh[2]
    g_p2 = g_nh[0] * f.t2v[0] + g_nh[1] * f.t2v[1] + g_nh[2] * f.t2v[2]
    if f.pz > 1e-9:
        g_p2 += -g_pz * f.p2 / fmax(f.pz, TINY)
    g_s = g_p2 * (f.sinp - f.root)
    g_vh[2] += 0.5 * g_s

    # t2v = vh x t1v
    g_vh[0] += f.t1v[1] * g_t2v[2] - f.t1v[2] * g_t2v[1]
    g_vh[1] += f.t1v[2] * g_t2v[0] - f.t1v[0] * g_t2v[2]
    g_vh[2] += f.t1v[0] * g_t2v[1] - f.t1v[1] * g_t2v[0]
    g_t1v[0] += g_t2v[1] * f.vh[2] - g_t2v[2] * f.vh[1]
    g_t1v[1] += g_t2v[2] * f.vh[0] - g_t2v[0] * f.vh[2]
    g_t1v[2] += g_t2v[0] * f.vh[1] - g_t2v[1] * f.vh[0]

    dp = g_t1v[0] * f.t1v[0] + g_t1v[1] * f.t1v[1] + g_t1v[2] * f.t1v[2]
    for c in range(3):
        g_m[c] = (g_t1v[c] - dp * f.t1v[c]) * f.inv_len
    if f.lensq > 1e-20:
        g_vh[0] += g_m[1]
        g_vh[1] += -g_m[0]

    dp = g_vh[0] * f.vh[0] + g_vh[1] * f.vh[1] + g_vh[2] * f.vh[2]
    cdef double vu_len = fmax(f.vu_len, TINY)
    for c in range(3):
        g_vu[c] = (g_vh[c] - dp * f.vh[c]) / vu_len
    g_alpha += g_vu[0] * wo[0] + g_vu[1] * wo[1]
    g_wo_out[0] = alpha * g_vu[0]
    g_wo_out[1] = alpha * g_vu[1]
    g_wo_out[2] = g_vu[2]
    g_alpha_out[0] = g_alpha


cdef inline void _tex3(const double[:, :, ::1] tex, double u, double v,
                       double* out) noexcept nogil:
    cdef int j0, j1, i0, i1
    cdef double fx, fy
    cdef int c
    _bilin_idx(u, v, <int>tex.shape[1], <int>tex.shape[0], &j0, &j1, &i0, &i1, &fx, &fy)
    for c in range(3):
        out[c] = (tex[i0, j0, c] * (1 - fx) * (1 - fy)
                  + tex[i0, j1, c] * fx * (1 - fy)
                  + tex[i1, j0, c] * (1 - fx) * fy
                  + tex[i1, j1, c] * fx * fy)


cdef inline double _tex1(const double[:, ::1] tex, double u, double v) noexcept nogil:
    cdef int j0, j1, i0, i1
    cdef double fx, fy
    _bilin_idx(u, v, <int>tex.shape[1], <int>tex.shape[0], &j0, &j1, &i0, &i1, &fx, &fy)
    return (tex[i0, j0] * (1 - fx) * (1 - fy)
            + tex[i0, j1] * fx * (1 - fy)
            + tex[i1, j0] * (1 - fx) * fy
            + tex[i1, j1] * fx * fy)


def shade_forward(const int64_t[::1] pids, const double[:, ::1] wo,
                  const double[:, ::1] nrm, const double[:, ::1] t1,
                  const double[:, ::1] t2, const double[:, ::1] uv,
                  const double[:, :, ::1] albedo, const double[:, ::1] rough,
                  const double[:, ::1] vis, const double[:, :, ::1] env_rad,
                  int spp, uint64_t seed, double[:, ::1] out):
    cdef Py_ssize_t n = pids.shape[0]
    cdef Py_ssize_t p
    with nogil:
        for p in range(n):
            _shade_px_fwd(pids[p], &wo[p, 0], &nrm[p, 0], &t1[p, 0], &t2[p, 0],
                          &uv[p, 0], albedo, rough, vis, env_rad, spp, seed,
                          &out[p, 0])


cdef void _shade_px_fwd(int64_t pid, const double* wo_w, const double* n_w,
                        const double* t1_w, const double* t2_w,
                        const double* uv, const double[:, :, ::1] albedo,
                        const double[:, ::1] rough, const double[:, ::1] vis,
                        const double[:, :, ::1] env_rad, int spp,
                        uint64_t seed, double* out) noexcept nogil:
    cdef double alb[3]
    cdef double wol[3]
    cdef double accum[3]
    cdef double h[3]
    cdef double wi[3]
    cdef double wiw[3]
    cdef double rad[3]
    cdef double r, v, alpha, u4, c_ho, ci, one_m, g1i, ue, ve
    cdef double fres
    cdef VndfFwd f
    cdef int k, c
    cdef int j0, j1, i0, i1
    cdef double fx, fy, w00, w01, w10, w11
    cdef int we = <int>env_rad.shape[1]
    cdef int he = <int>env_rad.shape[0]
    cdef bint active, valid

    _tex3(albedo, uv[0], uv[1], alb)
    r = _tex1(rough, uv[0], uv[1])
    r = fmin(fmax(r, R_MIN), 1.0)
    v = _tex1(vis, uv[0], uv[1])
    alpha = r * r
    u4 = alpha * alpha

    wol[0] = wo_w[0] * t1_w[0] + wo_w[1] * t1_w[1] + wo_w[2] * t1_w[2]
    wol[1] = wo_w[0] * t2_w[0] + wo_w[1] * t2_w[1] + wo_w[2] * t2_w[2]
    wol[2] = wo_w[0] * n_w[0] + wo_w[1] * n_w[1] + wo_w[2] * n_w[2]
    active = wol[2] > EPS_COS

    accum[0] = 0.0; accum[1] = 0.0; accum[2] = 0.0
    for k in range(spp):
        _vndf_fwd(alpha, wol, _u01(seed, <uint64_t>pid, <uint64_t>k, 0),
                  _u01(seed, <uint64_t>pid, <uint64_t>k, 1), &f)
        for c in range(3):
            h[c] = f.h[c]
        c_ho = wol[0] * h[0] + wol[1] * h[1] + wol[2] * h[2]
        for c in range(3):
            wi[c] = 2.0 * c_ho * h[c] - wol[c]
        ci = wi[2]
        valid = active and ci > 0.0
        if not valid:
            continue

        one_m = (1.0 - c_ho) * (1.0 - c_ho)
        one_m = one_m * one_m
        g1i = _g1_val(u4, fmax(ci, TINY))
        for c in range(3):
            wiw[c] = wi[0] * t1_w[c] + wi[1] * t2_w[c] + wi[2] * n_w[c]
        ue = atan2(wiw[0], -wiw[2]) / (2.0 * M_PI) + 0.5
        ue = ue - floor(ue)
        ve = acos(fmin(fmax(wiw[1], -1.0), 1.0)) / M_PI
        _bilin_idx(ue, ve, we, he, &j0, &j1, &i0, &i1, &fx, &fy)
        w00 = (1 - fx) * (1 - fy)
        w01 = fx * (1 - fy)
        w10 = (1 - fx) * fy
        w11 = fx * fy
        for c in range(3):
            rad[c] = (env_rad[i0, j0, c] * w00 + env_rad[i0, j1, c] * w01
                      + env_rad[i1, j0, c] * w10 + env_rad[i1, j1, c] * w11)
            fres = alb[c] + (1.0 - alb[c]) * ((1.0 - c_ho) * one_m)
            accum[c] += rad[c] * fres * g1i

    for c in range(3):
        out[c] = v * accum[c] / spp


def shade_backward(const int64_t[::1] pids, const double[:, ::1] wo,
                   const double[:, ::1] nrm, const double[:, ::1] t1,
                   const double[:, ::1] t2, const double[:, ::1] uv,
                   const double[:, :, ::1] albedo, const double[:, ::1] rough,
                   const double[:, ::1] vis, const double[:, :, ::1] env_rad,
                   const double[:, :, ::1] env_sig, int spp, uint64_t seed,
                   const double[:, ::1] g_s, double[:, ::1] s_out,
                   double[:, :, ::1] g_env, double[:, ::1] g_alb_out,
                   double[::1] g_r_out, double[::1] g_vis_out,
                   double[:, ::1] g_n_out, double[:, ::1] g_t1_out,
                   double[:, ::1] g_t2_out):
    cdef Py_ssize_t n = pids.shape[0]
    cdef Py_ssize_t p
    with nogil:
        for p in range(n):
            _shade_px_bwd(pids[p], &wo[p, 0], &nrm[p, 0], &t1[p, 0], &t2[p, 0],
                          &uv[p, 0], albedo, rough, vis, env_rad, env_sig,
                          spp, seed, &g_s[p, 0], &s_out[p, 0], g_env,
                          &g_alb_out[p, 0], &g_r_out[p], &g_vis_out[p],
                          &g_n_out[p, 0], &g_t1_out[p, 0], &g_t2_out[p, 0])


cdef void _shade_px_bwd(int64_t pid, const double* wo_w, const double* n_w,
                        const double* t1_w, const double* t2_w,
                        const double* uv, const double[:, :, ::1] albedo,
                        const double[:, ::1] rough, const double[:, ::1] vis,
                        const double[:, :, ::1] env_rad,
                        const double[:, :, ::1] env_sig, int spp,
                        uint64_t seed, const double* g_s, double* s_out,
                        double[:, :, ::1] g_env, double* g_alb_out,
                        double* g_r_out, double* g_vis_out, double* g_n_out,
                        double* g_t1_out, double* g_t2_out) noexcept nogil:
    cdef double alb[3]
    cdef double wol[3]
    cdef double accum[3]
    cdef double g_term[3]
    cdef double g_alb[3]
    cdef double g_wol[3]
    cdef double g_n[3]
    cdef double g_t1[3]
    cdef double g_t2[3]
    cdef double h[3]
    cdef double wi[3]
    cdef double wiw[3]
    cdef double rad[3]
    cdef double fres[3]
    cdef double g_l[3]
    cdef double g_f[3]
    cdef double g_wiw[3]
    cdef double g_wi[3]
    cdef double g_h[3]
    cdef double due[3]
    cdef double dve[3]
    cdef double g_wo_smp[3]
    cdef double r_tex, r, v, alpha, u4, c_ho, ci, ci_s, one_m, g1i, q, ue, ve
    cdef double g_g1, g_ue, g_ve, horiz, inv_h, sin_v, denom, g_u4, g_cho
    cdef double g_c, g_alpha_smp, g_r_acc
    cdef VndfFwd f
    cdef int k, c
    cdef int j0, j1, i0, i1
    cdef double fx, fy, w00, w01, w10, w11
    cdef int we = <int>env_rad.shape[1]
    cdef int he = <int>env_rad.shape[0]
    cdef bint active, valid

    _tex3(albedo, uv[0], uv[1], alb)
    r_tex = _tex1(rough, uv[0], uv[1])
    r = fmin(fmax(r_tex, R_MIN), 1.0)
    v = _tex1(vis, uv[0], uv[1])
    alpha = r * r
    u4 = alpha * alpha

    wol[0] = wo_w[0] * t1_w[0] + wo_w[1] * t1_w[1] + wo_w[2] * t1_w[2]
    wol[1] = wo_w[0] * t2_w[0] + wo_w[1] * t2_w[1] + wo_w[2] * t2_w[2]
    wol[2] = wo_w[0] * n_w[0] + wo_w[1] * n_w[1] + wo_w[2] * n_w[2]
    active = wol[2] > EPS_COS

    for c in range(3):
        accum[c] = 0.0
        g_term[c] = v * g_s[c] / spp
        g_alb[c] = 0.0
        g_wol[c] = 0.0
        g_n[c] = 0.0
        g_t1[c] = 0.0
        g_t2[c] = 0.0
    g_r_acc = 0.0

    for k in range(spp):
        _vndf_fwd(alpha, wol, _u01(seed, <uint64_t>pid, <uint64_t>k, 0),
                  _u01(seed, <uint64_t>pid, <uint64_t>k, 1), &f)
        for c in range(3):
            h[c] = f.h[c]
        c_ho = wol[0] * h[0] + wol[1] * h[1] + wol[2] * h[2]
        for c in range(3):
            wi[c] = 2.0 * c_ho * h[c] - wol[c]
        ci = wi[2]
        valid = active and ci > 0.0
        if not valid:
            continue

        one_m = (1.0 - c_ho) * (1.0 - c_ho)
        one_m = one_m * one_m
        ci_s = fmax(ci, TINY)
        q = sqrt(u4 + (1.0 - u4) * ci_s * ci_s)
        g1i = 2.0 * ci_s / fmax(ci_s + q, TINY)
        for c in range(3):
            wiw[c] = wi[0] * t1_w[c] + wi[1] * t2_w[c] + wi[2] * n_w[c]
        ue = atan2(wiw[0], -wiw[2]) / (2.0 * M_PI) + 0.5
        ue = ue - floor(ue)
        ve = acos(fmin(fmax(wiw[1], -1.0), 1.0)) / M_PI
        _bilin_idx(ue, ve, we, he, &j0, &j1, &i0, &i1, &fx, &fy)
        w00 = (1 - fx) * (1 - fy)
        w01 = fx * (1 - fy)
        w10 = (1 - fx) * fy
        w11 = fx * fy
        g_g1 = 0.0
        for c in range(3):
            rad[c] = (env_rad[i0, j0, c] * w00 + env_rad[i0, j1, c] * w01
                      + env_rad[i1, j0, c] * w10 + env_rad[i1, j1, c] * w11)
            fres[c] = alb[c] + (1.0 - alb[c]) * ((1.0 - c_ho) * one_m)
            accum[c] += rad[c] * fres[c] * g1i
            g_l[c] = g_term[c] * fres[c] * g1i
            g_f[c] = g_term[c] * rad[c] * g1i
            g_g1 += g_term[c] * rad[c] * fres[c]

        # environment texels
        for c in range(3):
            g_env[i0, j0, c] += g_l[c] * (w00 * env_sig[i0, j0, c])
            g_env[i0, j1, c] += g_l[c] * (w01 * env_sig[i0, j1, c])
            g_env[i1, j0, c] += g_l[c] * (w10 * env_sig[i1, j0, c])
            g_env[i1, j1, c] += g_l[c] * (w11 * env_sig[i1, j1, c])

        # env uv -> incident direction
        g_ue = 0.0
        g_ve = 0.0
        for c in range(3):
            due[c] = we * ((1 - fy) * (env_rad[i0, j1, c] - env_rad[i0, j0, c])
                           + fy * (env_rad[i1, j1, c] - env_rad[i1, j0, c]))
            dve[c] = he * ((1 - fx) * (env_rad[i1, j0, c] - env_rad[i0, j0, c])
                           + fx * (env_rad[i1, j1, c] - env_rad[i0, j1, c]))
            g_ue += g_l[c] * due[c]
            g_ve += g_l[c] * dve[c]
        horiz = wiw[0] * wiw[0] + wiw[2] * wiw[2]
        if horiz > 1e-16:
            inv_h = 1.0 / fmax(horiz, 1e-16)
            sin_v = sqrt(fmax(1.0 - wiw[1] * wiw[1], 1e-16))
            g_wiw[0] = g_ue * (-wiw[2]) * inv_h / (2.0 * M_PI)
            g_wiw[1] = -g_ve / (M_PI * sin_v)
            g_wiw[2] = g_ue * wiw[0] * inv_h / (2.0 * M_PI)
        else:
            g_wiw[0] = 0.0; g_wiw[1] = 0.0; g_wiw[2] = 0.0

        for c in range(3):
            g_t1[c] += wi[0] * g_wiw[c]
            g_t2[c] += wi[1] * g_wiw[c]
            g_n[c] += wi[2] * g_wiw[c]
        g_wi[0] = g_wiw[0] * t1_w[0] + g_wiw[1] * t1_w[1] + g_wiw[2] * t1_w[2]
        g_wi[1] = g_wiw[0] * t2_w[0] + g_wiw[1] * t2_w[1] + g_wiw[2] * t2_w[2]
        g_wi[2] = g_wiw[0] * n_w[0] + g_wiw[1] * n_w[1] + g_wiw[2] * n_w[2]

        # masking term G1(ci; r^4)
        denom = fmax(q * (ci_s + q) * (ci_s + q), TINY)
        g_wi[2] += g_g1 * 2.0 * u4 / denom
        g_u4 = g_g1 * (-ci_s * (1.0 - ci_s * ci_s) / denom)
        g_r_acc += 4.0 * r * r * r * g_u4

        # Fresnel
        g_cho = 0.0
        for c in range(3):
            g_alb[c] += g_f[c] * (1.0 - ((1.0 - c_ho) * one_m))
            g_cho += g_f[c] * (-(5.0 * one_m) * (1.0 - alb[c]))

        # reflection wi = 2 (wo.h) h - wo
        g_c = 2.0 * (g_wi[0] * h[0] + g_wi[1] * h[1] + g_wi[2] * h[2]) + g_cho
        for c in range(3):
            g_h[c] = g_c * wol[c] + 2.0 * c_ho * g_wi[c]
            g_wol[c] += g_c * h[c] - g_wi[c]

        _vndf_bwd(alpha, wol, &f, g_h, &g_alpha_smp, g_wo_smp)
        g_r_acc += 2.0 * r * g_alpha_smp
        for c in range(3):
            g_wol[c] += g_wo_smp[c]

    # pixel-level chains
    g_vis_out[0] = (g_s[0] * accum[0] + g_s[1] * accum[1] + g_s[2] * accum[2]) / spp
    for c in range(3):
        s_out[c] = v * accum[c] / spp
        g_t1[c] += g_wol[0] * wo_w[c]
        g_t2[c] += g_wol[1] * wo_w[c]
        g_n[c] += g_wol[2] * wo_w[c]
        g_alb_out[c] = g_alb[c]
        g_n_out[c] = g_n[c]
        g_t1_out[c] = g_t1[c]
        g_t2_out[c] = g_t2[c]
    if r_tex > R_MIN and r_tex < 1.0:
        g_r_out[0] = g_r_acc
    else:
        g_r_out[0] = 0.0
