"""Probe-sphere relighting and image-comparison metrics.

Environment maps are compared indirectly: relight a perfect sphere of a
preset finish (mirror, shiny, diffuse) under each map and measure the
chromatic angular error and scale-invariant RMSE between the renders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brdf import R_MIN
from .core import quaternion
from .core.camera import PinholeCamera
from .core.image import HdrImage, MaskImage, check_same_shape
from .core.mesh import make_uv_sphere
from .core.pose import PoseScale
from .envlight import EnvMap, bilinear_lookup, dir_to_uv
from .errors import DegenerateReference, EmptyMask
from .render import AlpModel, Scene, rasterize, render
from .render.rng import sample_uniform

_PSNR_CAP = 99.0


@dataclass(frozen=True)
class ProbeMaterial:
    """Fixed evaluation finish: mirror and shiny are metallic, diffuse is
    Lambertian with albedo 0.8."""

    kind: str

    _ALLOWED = ("mirror", "shiny", "diffuse")

    def __post_init__(self):
        if self.kind not in self._ALLOWED:
            raise ValueError(f"unknown probe material {self.kind!r}")

    @property
    def roughness(self) -> float:
        return {"mirror": R_MIN, "shiny": 0.25}.get(self.kind, 1.0)


MIRROR = ProbeMaterial("mirror")
SHINY = ProbeMaterial("shiny")
DIFFUSE = ProbeMaterial("diffuse")


def _probe_camera(res: int) -> PinholeCamera:
    # frame a unit sphere at distance 3 with ~10% margin
    dist = 3.0
    r_proj = 1.0 / np.sqrt(dist * dist - 1.0)  # tan of the silhouette half-angle
    focal = 0.45 * res / r_proj
    return PinholeCamera.look_at(
        eye=np.array([0.0, 0.0, dist]), target=np.zeros(3),
        up=np.array([0.0, 1.0, 0.0]), focal=focal, width=res, height=res)


def _lambertian_sphere(env: EnvMap, albedo: float, cam: PinholeCamera,
                       mesh, pose: PoseScale, spp: int, seed: int):
    """Cosine-hemisphere shading of the sphere; diffuse needs no microfacet
    machinery so it bypasses the main renderer."""
    gbuf = rasterize(mesh, pose, cam, aa_width=1.5)
    h, w = cam.height, cam.width
    img = np.zeros((h, w, 3))
    if gbuf.hit.any():
        ii, jj = np.nonzero(gbuf.hit)
        pids = (ii * w + jj).astype(np.uint64)
        n = gbuf.normal[ii, jj]
        t1 = gbuf.tangent1[ii, jj]
        t2 = gbuf.tangent2[ii, jj]
        acc = np.zeros((len(ii), 3))
        for k in range(spp):
            u1 = sample_uniform(seed, pids, k, 0)
            u2 = sample_uniform(seed, pids, k, 1)
            # cosine-weighted hemisphere: estimator collapses to albedo * L
            r = np.sqrt(u1)
            phi = 2.0 * np.pi * u2
            x = r * np.cos(phi)
            y = r * np.sin(phi)
            z = np.sqrt(np.maximum(1.0 - u1, 0.0))
            wi = x[:, None] * t1 + y[:, None] * t2 + z[:, None] * n
            u, v = dir_to_uv(wi)
            acc += bilinear_lookup(env.radiance, u, v)
        img[ii, jj] = albedo * acc / spp * gbuf.coverage[ii, jj, None]
    return HdrImage(img), MaskImage(gbuf.coverage.copy())


def relight_sphere(env: EnvMap, mat: ProbeMaterial, cam: PinholeCamera | None = None,
                   res: int = 128, spp: int = 256, seed: int = 0):
    """Render a unit probe sphere centered in frame under ``env``.

    Returns (HdrImage, MaskImage); deterministic given seed.
    """
    if cam is None:
        cam = _probe_camera(res)
    mesh = make_uv_sphere(48, 96, radius=1.0)
    pose = PoseScale(rotation=quaternion.identity(), translation=np.zeros(3),
                     scale=1.0)
    if mat.kind == "diffuse":
        return _lambertian_sphere(env, 0.8, cam, mesh, pose, spp, seed)
    model = AlpModel.uniform(mesh, albedo=(1.0, 1.0, 1.0),
                             roughness=mat.roughness, visibility=1.0, tex_res=2)
    out = render(Scene(model=model, pose=pose, cam=cam, env=env,
                       spp=spp, seed=seed))
    return out.image, out.mask


def _in_mask(a: HdrImage, b: HdrImage, mask) -> tuple[np.ndarray, np.ndarray]:
    check_same_shape(a, b)
    pa, pb = a.pixels, b.pixels
    if mask is None:
        sel = np.ones(pa.shape[:2], dtype=bool)
    else:
        vals = mask.values if isinstance(mask, MaskImage) else np.asarray(mask)
        if vals.shape != pa.shape[:2]:
            check_same_shape(a, MaskImage(vals.astype(np.float64)))
        sel = vals > 0.5
    if not sel.any():
        raise EmptyMask("metric mask has no pixels")
    return pa[sel], pb[sel]


def angular_error(a: HdrImage, b: HdrImage, mask=None) -> float:
    """Mean per-pixel angle in degrees between RGB vectors.

    Chromaticity-only: invariant to any positive global scale of either
    image.  Pixels where either vector is zero are skipped.
    """
    pa, pb = _in_mask(a, b, mask)
    na = np.linalg.norm(pa, axis=1)
    nb = np.linalg.norm(pb, axis=1)
    ok = (na > 0) & (nb > 0)
    if not ok.any():
        return 0.0
    cosang = np.einsum("ij,ij->i", pa[ok], pb[ok]) / (na[ok] * nb[ok])
    return float(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))).mean())


def rmse(a: HdrImage, b: HdrImage, mask=None) -> float:
    pa, pb = _in_mask(a, b, mask)
    return float(np.sqrt(np.mean((pa - pb) ** 2)))


def si_rmse(a: HdrImage, b: HdrImage, mask=None) -> float:
    """RMSE after optimally scaling ``a`` to match the reference ``b``.

    One joint scalar over all in-mask RGB values, so white-balance errors
    still count; only global exposure is forgiven.  Asymmetric by design.
    """
    pa, pb = _in_mask(a, b, mask)
    aa = float(np.sum(pa * pa))
    if aa == 0.0:
        raise DegenerateReference("candidate image is identically zero in-mask")
    alpha = float(np.sum(pa * pb)) / aa
    return float(np.sqrt(np.mean((alpha * pa - pb) ** 2)))


def psnr(a: HdrImage, b: HdrImage, mask=None, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) over in-mask pixels, capped at 99 dB."""
    if peak <= 0:
        raise ValueError("peak must be > 0")
    pa, pb = _in_mask(a, b, mask)
    mse = float(np.mean((pa - pb) ** 2))
    if mse <= 0.0:
        return _PSNR_CAP
    return min(_PSNR_CAP, float(10.0 * np.log10(peak * peak / mse)))
