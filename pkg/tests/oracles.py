"""Independent numerical oracles shared by the unit and acceptance suites.

Everything here recomputes reference values from scratch (quadrature, grid
search, statistics) rather than trusting the library's own output, so a bug
in the shading code cannot cancel out of the comparison.
"""
from __future__ import annotations

import numpy as np
from scipy import integrate, stats

from alprobe.brdf import (BrdfParams, eval_brdf, ggx_ndf, sample_vndf,
                          smith_g1, vndf_pdf)


def spherical_dir(theta, phi):
    s = np.sin(theta)
    return np.array([s * np.cos(phi), s * np.sin(phi), np.cos(theta)])


def tilted_wo(angle_rad):
    """Outgoing direction at a given angle from the +z normal, in the xz plane."""
    return np.array([np.sin(angle_rad), 0.0, np.cos(angle_rad)])


Z = np.array([0.0, 0.0, 1.0])


def ggx_projected_normalization(r: float) -> float:
    """Quadrature of D(h)|n.h| over the hemisphere; exactly 1 for a valid NDF.

    Uses the substitution x = tan^2(theta), under which the integrand becomes
    a slowly varying rational function even for near-mirror roughness, so the
    adaptive quadrature converges where a naive theta grid would miss the
    spike entirely.
    """
    def integrand(x):
        c2 = 1.0 / (1.0 + x)
        return np.pi * float(ggx_ndf(r, np.sqrt(c2))) * c2 * c2

    split = 100.0 * r**4
    head, _ = integrate.quad(integrand, 0.0, split, epsabs=1e-12, limit=200)
    tail, _ = integrate.quad(integrand, split, np.inf, epsabs=1e-12, limit=200)
    return head + tail


def hemisphere_quadrature(fn, epsabs=1e-9):
    """Adaptive integral of fn(wi) * sin(theta) over the upper hemisphere."""
    val, _ = integrate.dblquad(
        lambda phi, theta: fn(spherical_dir(theta, phi)) * np.sin(theta),
        0.0, np.pi / 2.0, -np.pi, np.pi, epsabs=epsabs, epsrel=1e-8)
    return val


def directional_albedo(p: BrdfParams, wo, channel: int) -> float:
    """Quadrature of f(wi, wo) (n.wi) over wi for one color channel."""
    def fn(wi):
        return float(eval_brdf(p, wi, wo, Z)[channel]) * max(0.0, wi[2])
    return hemisphere_quadrature(fn)


def generator_density(p: BrdfParams, wo, wi) -> float:
    """Density of the VNDF sampler over the full sphere of reflections.

    Equals vndf_pdf above the horizon; below it, the generator still lands
    with positive density (heavy GGX tails) even though the estimator zeroes
    those draws, so the density is recomputed from the formula directly.
    """
    if wi[2] > 0.0:
        return vndf_pdf(p, wo, wi, Z)
    h = wi + wo
    norm = np.linalg.norm(h)
    if norm == 0.0:
        return 0.0
    h = h / norm
    if h[2] <= 0.0:
        return 0.0
    d = float(ggx_ndf(p.roughness, h[2]))
    return float(smith_g1(p.roughness, wo[2]) * d / (4.0 * wo[2]))


def pdf_normalization(p: BrdfParams, wo, n_theta=384, n_phi=256):
    """Gauss-Legendre integrals of the sampling density over wi.

    Returns (full-sphere generator mass, above-horizon vndf_pdf mass).  The
    first must be 1 for a correctly normalized sampler; the gap between the
    two is the below-horizon tail that the estimator discards.
    """
    xt, wt = np.polynomial.legendre.leggauss(n_theta)
    xp, wp = np.polynomial.legendre.leggauss(n_phi)
    thetas = 0.5 * (xt + 1.0) * np.pi
    phis = xp * np.pi
    total = 0.0
    upper = 0.0
    for th, w1 in zip(thetas, wt * (np.pi / 2.0)):
        row = 0.0
        for ph, w2 in zip(phis, wp * np.pi):
            row += w2 * generator_density(p, wo, spherical_dir(th, ph))
        contrib = w1 * row * np.sin(th)
        total += contrib
        if th < np.pi / 2.0:
            upper += contrib
    return total, upper


def _bin_mass_gl(p, wo, t0, t1, p0, p1, order):
    """Gauss-Legendre estimate of the pdf mass inside one (theta, phi) bin."""
    x, w = np.polynomial.legendre.leggauss(order)
    th = 0.5 * (t1 - t0) * (x + 1.0) + t0
    ph = 0.5 * (p1 - p0) * (x + 1.0) + p0
    wt = w * 0.5 * (t1 - t0)
    wp = w * 0.5 * (p1 - p0)
    total = 0.0
    for a, wa in zip(th, wt):
        s = np.sin(a)
        for b, wb in zip(ph, wp):
            total += wa * wb * s * vndf_pdf(p, wo, spherical_dir(a, b), Z)
    return total


def _bin_mass_refined(p, wo, t0, t1, p0, p1):
    val, _ = integrate.dblquad(
        lambda phi, theta: vndf_pdf(p, wo, spherical_dir(theta, phi), Z)
        * np.sin(theta),
        t0, t1, p0, p1, epsabs=1e-10, epsrel=1e-7)
    return val


def vndf_chi_square(r: float, n_samples=20000, grid=32, seed=7,
                    wo_angle=np.pi / 4.0):
    """Chi-square p-value of sampled directions against the claimed pdf.

    Bins incident directions on a grid x grid (theta, phi) partition of the
    hemisphere plus one overflow cell for below-horizon reflections.  Expected
    counts come from per-bin quadrature of vndf_pdf; bins where a cheap and a
    denser Gauss-Legendre rule disagree get an adaptive refinement pass, which
    matters for near-mirror roughness where the lobe is narrower than a bin.
    Low-expectation bins are pooled (Cochran's rule).
    """
    p = BrdfParams(albedo=np.ones(3), roughness=r)
    wo = tilted_wo(wo_angle)
    rng = np.random.default_rng(seed)
    us = rng.random((n_samples, 2))

    counts = np.zeros((grid, grid))
    below = 0
    for u1, u2 in us:
        rec = sample_vndf(p, wo, Z, float(u1), float(u2))
        wi = rec.direction
        if wi[2] <= 0.0:
            below += 1
            continue
        theta = np.arccos(min(1.0, wi[2]))
        phi = np.arctan2(wi[1], wi[0])
        it = min(grid - 1, int(theta / (np.pi / 2.0) * grid))
        ip = min(grid - 1, int((phi + np.pi) / (2.0 * np.pi) * grid))
        counts[it, ip] += 1

    t_edges = np.linspace(0.0, np.pi / 2.0, grid + 1)
    p_edges = np.linspace(-np.pi, np.pi, grid + 1)
    expected = np.zeros((grid, grid))
    for i in range(grid):
        for j in range(grid):
            coarse = _bin_mass_gl(p, wo, t_edges[i], t_edges[i + 1],
                                  p_edges[j], p_edges[j + 1], 4)
            if coarse * n_samples < 0.05:
                expected[i, j] = coarse
                continue
            dense = _bin_mass_gl(p, wo, t_edges[i], t_edges[i + 1],
                                 p_edges[j], p_edges[j + 1], 8)
            if abs(dense - coarse) > 1e-3 * max(dense, 1e-12):
                dense = _bin_mass_refined(p, wo, t_edges[i], t_edges[i + 1],
                                          p_edges[j], p_edges[j + 1])
            expected[i, j] = dense
    expected *= n_samples
    exp_below = max(0.0, n_samples - expected.sum())

    obs = np.append(counts.ravel(), below)
    exp = np.append(expected.ravel(), exp_below)
    keep = exp >= 5.0
    pooled_obs = obs[~keep].sum()
    pooled_exp = exp[~keep].sum()
    obs = obs[keep]
    exp = exp[keep]
    if pooled_exp >= 5.0:
        obs = np.append(obs, pooled_obs)
        exp = np.append(exp, pooled_exp)
    else:
        # fold an under-populated pool into the smallest kept bin so no
        # cell has a vanishing denominator
        k = int(np.argmin(exp))
        obs[k] += pooled_obs
        exp[k] += pooled_exp
    exp *= obs.sum() / exp.sum()  # remove residual quadrature drift
    statistic = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(obs) - 1
    return float(stats.chi2.sf(statistic, dof))


def smooth_env(height=16, seed=3):
    """Low-frequency positive environment: vertical gradient plus two wide
    gaussian blobs, gentle enough that texel-binned averages stay close to
    texel-center values."""
    H, W = height, 2 * height
    rng = np.random.default_rng(seed)
    iy = np.arange(H, dtype=np.float64)[:, None]
    base = (0.4 + 1.2 * (1.0 - iy / (H - 1))) * np.ones((H, W))
    rad = np.stack([0.9 * base, base, 1.1 * base], axis=-1)
    yy, xx = np.meshgrid(np.arange(H, dtype=np.float64),
                         np.arange(W, dtype=np.float64), indexing="ij")
    for _ in range(2):
        cy = rng.uniform(0.25 * H, 0.75 * H)
        cx = rng.uniform(0.0, W)
        col = rng.uniform(0.5, 1.0, size=3)
        dx = np.minimum(np.abs(xx - cx), W - np.abs(xx - cx))
        g = np.exp(-(dx**2 + (yy - cy)**2) / (2.0 * (0.15 * W) ** 2))
        rad = rad + 1.5 * g[:, :, None] * col[None, None, :]
    from alprobe.envlight import EnvMap
    return EnvMap.from_radiance(rad)


def sphere_scene(res=32, spp=64, seed=0, roughness=0.3, env=None,
                 radius=1.0, depth=4.0, focal=None, albedo=(1.0, 1.0, 1.0)):
    """Centered sphere viewed from +z; focal chosen to nearly fill the frame."""
    from alprobe.core import quaternion as quat
    from alprobe.core.camera import PinholeCamera
    from alprobe.core.mesh import make_uv_sphere
    from alprobe.core.pose import PoseScale
    from alprobe.render import AlpModel, Scene
    if focal is None:
        focal = 0.42 * res * depth / radius
    mesh = make_uv_sphere(24, 48, radius)
    model = AlpModel.uniform(mesh, albedo=albedo, roughness=roughness)
    cam = PinholeCamera.look_at(np.array([0.0, 0.0, depth]), np.zeros(3),
                                focal=focal, width=res, height=res)
    pose = PoseScale(rotation=quat.identity(), translation=np.zeros(3),
                     scale=1.0)
    if env is None:
        env = smooth_env()
    return Scene(model, pose, cam, env, spp=spp, seed=seed)


def unbiasedness_check(res=32, n_renders=100, spp=16, ref_spp=4096,
                       roughness=0.3, seed0=1000, ref_seed=777777):
    """Mean of many low-spp renders vs one high-spp reference.

    Returns (z_scores, n_tested): per-(pixel, channel) deviations of the mean
    in units of the combined standard error (mean's SE plus the reference's
    own SE inferred from the 1/sqrt(spp) scaling).
    """
    from dataclasses import replace
    from alprobe.render import render
    scene = sphere_scene(res=res, spp=spp, seed=seed0, roughness=roughness)
    stack = np.stack([
        render(replace(scene, seed=seed0 + i)).image.pixels
        for i in range(n_renders)])
    ref = render(replace(scene, spp=ref_spp, seed=ref_seed)).image.pixels
    mean = stack.mean(axis=0)
    sd = stack.std(axis=0, ddof=1)
    active = sd > 0.0
    se = np.sqrt(sd**2 / n_renders + sd**2 * (spp / ref_spp))
    z = np.zeros_like(mean)
    z[active] = np.abs(mean - ref)[active] / se[active]
    # where no sample variance exists, demand exact agreement
    assert np.allclose(mean[~active], ref[~active], atol=1e-12)
    return z[active], int(active.sum())


def mirror_unwarp_check(env_height=16, res=96, spp=64, min_hits=3):
    """Re-project a mirror-sphere render back onto the env grid.

    Each hit pixel's reflection direction is recomputed analytically from the
    true sphere geometry (ray-sphere intersection, not the renderer's
    G-buffer), binned to the nearest texel, and averaged.  Returns the
    relative L1 error of binned radiance vs the input map over covered texels
    and the covered fraction.
    """
    from alprobe.envlight import dir_to_uv
    from alprobe.render import render
    env = smooth_env(height=env_height)
    scene = sphere_scene(res=res, spp=spp, roughness=0.03, env=env)
    out = render(scene)
    cam = scene.cam
    origin, dirs = cam.pixel_rays()
    dirs = dirs.reshape(res, res, 3)

    H, W = env_height, 2 * env_height
    acc = np.zeros((H, W, 3))
    hits = np.zeros((H, W))
    for i in range(res):
        for j in range(res):
            if out.mask.values[i, j] < 1.0:
                continue  # full-coverage pixels only; edge pixels mix bg
            d = dirs[i, j]
            b = np.dot(d, origin)
            disc = b * b - (np.dot(origin, origin) - 1.0)
            if disc <= 0.0:
                continue
            s = -b - np.sqrt(disc)  # near intersection of x = origin + s d
            p = origin + s * d
            n = p / np.linalg.norm(p)
            refl = d - 2.0 * np.dot(d, n) * n
            u, v = dir_to_uv(refl)
            ti = min(H - 1, int(v * H))
            tj = min(W - 1, int(u * W)) % W
            acc[ti, tj] += out.image.pixels[i, j]
            hits[ti, tj] += 1.0
    covered = hits >= min_hits
    est = acc[covered] / hits[covered][:, None]
    ref = env.radiance[covered]
    rel_l1 = np.abs(est - ref).sum() / ref.sum()
    return rel_l1, float(covered.mean())


def mc_vs_quadrature(r, albedo, wo_angle, n_samples=4096, seed=11):
    """Constant-lighting MC estimate vs quadrature; returns (mc, se, quad)."""
    p = BrdfParams(albedo=np.asarray(albedo, dtype=np.float64), roughness=r)
    wo = tilted_wo(wo_angle)
    rng = np.random.default_rng(seed)
    us = rng.random((n_samples, 2))
    weights = np.zeros((n_samples, 3))
    for k, (u1, u2) in enumerate(us):
        weights[k] = sample_vndf(p, wo, Z, float(u1), float(u2)).weight
    mc = weights.mean(axis=0)
    se = weights.std(axis=0, ddof=1) / np.sqrt(n_samples)
    quad = np.array([directional_albedo(p, wo, c) for c in range(3)])
    return mc, se, quad
