"""Equirectangular environment radiance field.

Texels store unconstrained parameters theta with radiance = softplus(theta)
per channel, so optimization stays unconstrained while decoded radiance is
strictly positive.  Maps are W x H with W = 2H; u wraps horizontally, v
clamps at the poles.

Direction convention (package-wide): u = atan2(d.x, -d.z) / 2pi + 0.5,
v = acos(d.y) / pi.  The zenith (+y) is row 0 and -z maps to the center
column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidResolution, ObjectNotVisible


# ---------------------------------------------------------------------------
# parameterization helpers (shared with the renderer kernels)

def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    # tanh form: overflow-safe and bit-stable across backends
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def softplus_inv(y):
    y = np.asarray(y, dtype=np.float64)
    return np.where(y > 30.0, y, np.log(np.expm1(np.maximum(y, 1e-300))))


def bilinear_coords(u, v, width: int, height: int):
    """Texel indices and weights for wrap-u / clamp-v bilinear lookup."""
    x = np.asarray(u) * width - 0.5
    y = np.asarray(v) * height - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    j0 = np.mod(x0, width).astype(np.int64)
    j1 = np.mod(x0 + 1, width).astype(np.int64)
    i0 = np.clip(y0, 0, height - 1).astype(np.int64)
    i1 = np.clip(y0 + 1, 0, height - 1).astype(np.int64)
    return i0, i1, j0, j1, fx, fy


def bilinear_lookup(grid: np.ndarray, u, v):
    """Bilinear sample of an (H, W[, C]) grid at normalized (u, v)."""
    h, w = grid.shape[:2]
    i0, i1, j0, j1, fx, fy = bilinear_coords(u, v, w, h)
    if grid.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    return (
        grid[i0, j0] * (1 - fx) * (1 - fy)
        + grid[i0, j1] * fx * (1 - fy)
        + grid[i1, j0] * (1 - fx) * fy
        + grid[i1, j1] * fx * fy
    )


# ---------------------------------------------------------------------------
# direction <-> equirectangular uv

def dir_to_uv(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(d, dtype=np.float64)
    u = np.arctan2(d[..., 0], -d[..., 2]) / (2.0 * np.pi) + 0.5
    v = np.arccos(np.clip(d[..., 1], -1.0, 1.0)) / np.pi
    return np.mod(u, 1.0), v


def uv_to_dir(u, v) -> np.ndarray:
    theta = np.asarray(v) * np.pi
    phi = (np.asarray(u) - 0.5) * 2.0 * np.pi
    st = np.sin(theta)
    return np.stack(
        [st * np.sin(phi), np.cos(theta), -st * np.cos(phi)], axis=-1
    )


@dataclass
class EnvMap:
    """Radiance field over the sphere; ``theta`` is (H, W, 3) float64."""

    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 3 or self.theta.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) parameters, got {self.theta.shape}")
        if self.width != 2 * self.height:
            raise InvalidResolution(
                f"equirectangular maps need W = 2H, got {self.width}x{self.height}"
            )

    @property
    def width(self) -> int:
        return self.theta.shape[1]

    @property
    def height(self) -> int:
        return self.theta.shape[0]

    @property
    def radiance(self) -> np.ndarray:
        return softplus(self.theta)

    @classmethod
    def from_radiance(cls, radiance: np.ndarray) -> "EnvMap":
        radiance = np.maximum(np.asarray(radiance, dtype=np.float64), 1e-8)
        return cls(softplus_inv(radiance))

    @classmethod
    def constant(cls, rgb, height: int = 32) -> "EnvMap":
        grid = np.broadcast_to(
            np.asarray(rgb, dtype=np.float64), (height, 2 * height, 3)
        )
        return cls.from_radiance(grid)

    def sample(self, d: np.ndarray) -> np.ndarray:
        """Bilinear radiance lookup for unit directions (..., 3)."""
        u, v = dir_to_uv(d)
        return bilinear_lookup(self.radiance, u, v)

    def texel_directions(self) -> np.ndarray:
        """(H, W, 3) unit directions at texel centers."""
        u = (np.arange(self.width) + 0.5) / self.width
        v = (np.arange(self.height) + 0.5) / self.height
        uu, vv = np.meshgrid(u, v)
        return uv_to_dir(uu, vv)

    def texel_solid_angles(self) -> np.ndarray:
        """(H, W) solid angle of each texel (rows weighted by sin theta)."""
        v_edges = np.arange(self.height + 1) / self.height * np.pi
        band = np.cos(v_edges[:-1]) - np.cos(v_edges[1:])
        return np.tile((band * 2.0 * np.pi / self.width)[:, None], (1, self.width))


def resample(env: EnvMap, width: int, height: int, supersample: int = 4) -> EnvMap:
    """Resolution conversion with texel solid-angle (sin theta) weighting."""
    if width != 2 * height:
        raise InvalidResolution("target must satisfy W = 2H")
    k = supersample
    u = (np.arange(width * k) + 0.5) / (width * k)
    v = (np.arange(height * k) + 0.5) / (height * k)
    uu, vv = np.meshgrid(u, v)
    vals = bilinear_lookup(env.radiance, uu, vv)
    w = np.sin(vv * np.pi)[..., None]
    num = (vals * w).reshape(height, k, width, k, 3).sum(axis=(1, 3))
    den = w.reshape(height, k, width, k, 1).sum(axis=(1, 3))
    return EnvMap.from_radiance(num / np.maximum(den, 1e-12))


def smoothness_loss(
    env: EnvMap,
    n_pairs: int,
    sigma: float,
    rng: np.random.Generator | int,
    with_grad: bool = False,
):
    """Mean L1 radiance difference between nearby direction pairs.

    Directions are uniform on the sphere; each partner direction is the
    original rotated by a normally distributed angle (std ``sigma`` radians)
    about a random tangent axis.  Optionally returns d(loss)/d(theta).
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    d = rng.normal(size=(n_pairs, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    t = rng.normal(size=(n_pairs, 3))
    t -= d * np.einsum("ij,ij->i", t, d)[:, None]
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    ang = rng.normal(scale=sigma, size=n_pairs)
    # Rodrigues rotation of d about tangent axis t (d is perpendicular to t)
    d2 = (
        d * np.cos(ang)[:, None]
        + np.cross(t, d) * np.sin(ang)[:, None]
    )

    rad = env.radiance
    la = _lookup_with_weights(rad, d)
    lb = _lookup_with_weights(rad, d2)
    diff = la[0] - lb[0]
    loss = float(np.abs(diff).sum() / n_pairs)
    if not with_grad:
        return loss

    sgn = np.sign(diff) / n_pairs
    grad = np.zeros_like(env.theta)
    _scatter_lookup_grad(grad, la, sgn)
    _scatter_lookup_grad(grad, lb, -sgn)
    grad *= sigmoid(env.theta)
    return loss, grad


def _lookup_with_weights(rad: np.ndarray, dirs: np.ndarray):
    h, w = rad.shape[:2]
    u, v = dir_to_uv(dirs)
    i0, i1, j0, j1, fx, fy = bilinear_coords(u, v, w, h)
    w00 = (1 - fx) * (1 - fy)
    w01 = fx * (1 - fy)
    w10 = (1 - fx) * fy
    w11 = fx * fy
    val = (
        rad[i0, j0] * w00[:, None]
        + rad[i0, j1] * w01[:, None]
        + rad[i1, j0] * w10[:, None]
        + rad[i1, j1] * w11[:, None]
    )
    return val, (i0, i1, j0, j1, w00, w01, w10, w11)


def _scatter_lookup_grad(grad, lookup, sgn):
    _, (i0, i1, j0, j1, w00, w01, w10, w11) = lookup
    np.add.at(grad, (i0, j0), sgn * w00[:, None])
    np.add.at(grad, (i0, j1), sgn * w01[:, None])
    np.add.at(grad, (i1, j0), sgn * w10[:, None])
    np.add.at(grad, (i1, j1), sgn * w11[:, None])


@dataclass
class ConfidenceMap:
    """Normalized VNDF sampling frequency per environment texel, in [0, 1]."""

    values: np.ndarray  # (H, W)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("expected (H, W)")


def confidence_map(model, pose, cam, res: int, spp: int, seed: int = 0) -> ConfidenceMap:
    """Histogram the directions shading would sample, on an equirect grid.

    ``res`` is the output map height (width is 2 * res).  Raises
    ObjectNotVisible if the posed object misses the frame entirely.
    """
    from .render import rasterize, sample_shading_directions

    gbuf = rasterize(model.mesh, pose, cam)
    if not np.any(gbuf.hit):
        raise ObjectNotVisible("rasterized mask is empty")
    dirs = sample_shading_directions(gbuf, model, spp=spp, seed=seed)
    height, width = res, 2 * res
    u, v = dir_to_uv(dirs)
    j = np.mod(np.floor(u * width), width).astype(np.int64)
    i = np.clip(np.floor(v * height), 0, height - 1).astype(np.int64)
    counts = np.zeros((height, width))
    np.add.at(counts, (i, j), 1.0)
    peak = counts.max()
    if peak > 0:
        counts /= peak
    return ConfidenceMap(counts)
