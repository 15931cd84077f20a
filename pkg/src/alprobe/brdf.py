"""Metallic microfacet shading model and its importance sampler.

The model is a GGX-distribution microfacet specular lobe with Schlick Fresnel
and separable Smith shadowing, parameterized by an RGB specular albedo and a
scalar roughness r in [R_MIN, 1].  The squared-roughness convention applies:
the distribution width parameter is alpha = r^2, so r^4 appears wherever the
classic formulas use alpha^2.

Sampling draws from the distribution of visible microfacet normals (VNDF),
which collapses the single-sample estimator weight

    f(wi, wo) * (n . wi) / pdf(wi)

to ``fresnel * smith_g1(r, n . wi)`` — the form the renderer kernels use.

Functions here are the scalar/broadcast reference path; the renderer carries
its own vectorized and compiled copies which the test suite cross-checks
against this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

R_MIN = 0.03


@dataclass(frozen=True)
class BrdfParams:
    """Specular albedo in [0,1]^3 and roughness in [R_MIN, 1]."""

    albedo: np.ndarray
    roughness: float

    def __post_init__(self):
        object.__setattr__(
            self, "albedo", np.asarray(self.albedo, dtype=np.float64)
        )
        if np.any(self.albedo < 0) or np.any(self.albedo > 1):
            raise ValueError(f"albedo out of [0,1]: {self.albedo}")
        if not R_MIN <= self.roughness <= 1.0:
            raise ValueError(
                f"roughness {self.roughness} outside [{R_MIN}, 1]"
            )


@dataclass(frozen=True)
class SampleRecord:
    """One importance sample: direction, solid-angle pdf, estimator weight."""

    direction: np.ndarray
    pdf: float
    weight: np.ndarray


def ggx_ndf(r: float, cos_nh) -> np.ndarray:
    """Normal distribution D; integrates to 1 against |n.h| over the hemisphere."""
    r4 = r**4
    denom = np.square(cos_nh) * (r4 - 1.0) + 1.0
    return r4 / (np.pi * denom * denom)


def schlick_fresnel(albedo: np.ndarray, cos_ho) -> np.ndarray:
    """F = A + (1 - A) (1 - |h.wo|)^5, per channel."""
    a = np.asarray(albedo, dtype=np.float64)
    m = 1.0 - np.asarray(cos_ho, dtype=np.float64)
    return a + (1.0 - a) * m**5


def smith_g1(r: float, cos_n) -> np.ndarray:
    """One-sided Smith attenuation for the GGX distribution."""
    r4 = r**4
    c = np.asarray(cos_n, dtype=np.float64)
    return 2.0 * c / (c + np.sqrt(r4 + (1.0 - r4) * c * c))


def smith_g(r: float, cos_ni, cos_no) -> np.ndarray:
    """Separable masking-shadowing G = G1(n.wi) G1(n.wo)."""
    return smith_g1(r, cos_ni) * smith_g1(r, cos_no)


def half_vector(wi: np.ndarray, wo: np.ndarray) -> np.ndarray:
    h = np.asarray(wi, dtype=np.float64) + np.asarray(wo, dtype=np.float64)
    return h / np.linalg.norm(h)


def eval_brdf(p: BrdfParams, wi: np.ndarray, wo: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Reflectance f(wi, wo); zero whenever either direction is below the horizon."""
    cos_ni = float(np.dot(n, wi))
    cos_no = float(np.dot(n, wo))
    if cos_ni <= 0.0 or cos_no <= 0.0:
        return np.zeros(3)
    h = half_vector(wi, wo)
    d = ggx_ndf(p.roughness, abs(float(np.dot(n, h))))
    f = schlick_fresnel(p.albedo, abs(float(np.dot(h, wo))))
    g = smith_g(p.roughness, cos_ni, cos_no)
    return d * g / (4.0 * cos_ni * cos_no) * f


def build_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal tangent/bitangent for a unit normal."""
    if abs(n[1]) < 0.9:
        t = np.cross([0.0, 1.0, 0.0], n)
    else:
        t = np.cross([1.0, 0.0, 0.0], n)
    t = t / np.linalg.norm(t)
    return t, np.cross(n, t)


def sample_vndf(
    p: BrdfParams, wo: np.ndarray, n: np.ndarray, u1: float, u2: float
) -> SampleRecord:
    """Draw an incident direction from the visible-normal distribution.

    Below-horizon reflections are returned with zero weight (the estimator
    simply drops them); their pdf field still reports the generator density.
    """
    t1, t2 = build_frame(n)
    wo_loc = np.array([np.dot(wo, t1), np.dot(wo, t2), np.dot(wo, n)])
    if wo_loc[2] <= 0:
        raise ValueError("wo must lie above the surface")
    alpha = p.roughness**2
    h_loc = _sample_vndf_local(alpha, wo_loc, u1, u2)
    h = h_loc[0] * t1 + h_loc[1] * t2 + h_loc[2] * n
    cos_ho = float(np.dot(wo, h))
    wi = 2.0 * cos_ho * h - wo
    cos_ni = float(np.dot(n, wi))
    cos_no = float(np.dot(n, wo))
    d = ggx_ndf(p.roughness, float(h_loc[2]))
    pdf = smith_g1(p.roughness, cos_no) * d / (4.0 * cos_no)
    if cos_ni <= 0.0:
        return SampleRecord(direction=wi, pdf=float(pdf), weight=np.zeros(3))
    weight = schlick_fresnel(p.albedo, cos_ho) * smith_g1(p.roughness, cos_ni)
    return SampleRecord(direction=wi, pdf=float(pdf), weight=weight)


def _sample_vndf_local(alpha: float, wo_loc: np.ndarray, u1: float, u2: float) -> np.ndarray:
    """Visible-normal sample in the local frame (ellipsoid construction)."""
    vh = np.array([alpha * wo_loc[0], alpha * wo_loc[1], wo_loc[2]])
    vh /= np.linalg.norm(vh)
    lensq = vh[0] * vh[0] + vh[1] * vh[1]
    if lensq > 0:
        t1 = np.array([-vh[1], vh[0], 0.0]) / np.sqrt(lensq)
    else:
        t1 = np.array([1.0, 0.0, 0.0])
    t2 = np.cross(vh, t1)
    rho = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    p1 = rho * np.cos(phi)
    p2 = rho * np.sin(phi)
    sf = 0.5 * (1.0 + vh[2])
    p2 = (1.0 - sf) * np.sqrt(max(0.0, 1.0 - p1 * p1)) + sf * p2
    pz = np.sqrt(max(0.0, 1.0 - p1 * p1 - p2 * p2))
    nh = p1 * t1 + p2 * t2 + pz * vh
    h = np.array([alpha * nh[0], alpha * nh[1], max(0.0, nh[2])])
    return h / np.linalg.norm(h)


def vndf_pdf(p: BrdfParams, wo: np.ndarray, wi: np.ndarray, n: np.ndarray) -> float:
    """Solid-angle density of :func:`sample_vndf` over above-horizon wi."""
    cos_no = float(np.dot(n, wo))
    cos_ni = float(np.dot(n, wi))
    if cos_no <= 0.0 or cos_ni <= 0.0:
        return 0.0
    h = half_vector(wi, wo)
    cos_nh = float(np.dot(n, h))
    if cos_nh <= 0.0:
        return 0.0
    d = ggx_ndf(p.roughness, cos_nh)
    return float(smith_g1(p.roughness, cos_no) * d / (4.0 * cos_no))
