"""Differentiable forward renderer.

Per pixel: nearest-hit ray cast at the pixel center, deferred shading with
Monte Carlo image-based lighting (one VNDF-sampled bounce, direct light
only), soft-visibility modulation by the v texture, and silhouette-band
coverage.  Outputs are deterministic functions of (scene, seed).

Gradients cover environment texel parameters, pose (translation, rotation
tangent, log-scale) and the three material textures, using the same sample
sequence as the forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..brdf import R_MIN
from ..core.camera import PinholeCamera
from ..core.image import HdrImage, MaskImage
from ..core.mesh import TriMesh
from ..core.pose import PoseScale
from ..core.quaternion import normalize as q_normalize, to_matrix
from ..envlight import EnvMap, sigmoid
from ..errors import DimensionMismatch
from . import backend, geometry, kernels_np, silhouette
from .rng import derive_seed

DEFAULT_AA_WIDTH = 1.5

__all__ = [
    "AlpModel", "GBuffer", "RenderOutput", "RenderGradients", "Scene",
    "rasterize", "shade", "render", "render_with_gradients",
    "sample_shading_directions", "DEFAULT_AA_WIDTH", "derive_seed",
]


@dataclass
class AlpModel:
    """Shape plus spatially-varying metallic material and soft visibility."""

    mesh: TriMesh
    albedo: np.ndarray  # (Ha, Wa, 3) in [0, 1]
    roughness: np.ndarray  # (Hr, Wr) in [R_MIN, 1]
    visibility: np.ndarray  # (Hv, Wv) in [0, 1]
    q_ref: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        self.albedo = np.ascontiguousarray(self.albedo, dtype=np.float64)
        self.roughness = np.ascontiguousarray(self.roughness, dtype=np.float64)
        self.visibility = np.ascontiguousarray(self.visibility, dtype=np.float64)
        self.q_ref = q_normalize(np.asarray(self.q_ref, dtype=np.float64))
        if self.albedo.ndim != 3 or self.albedo.shape[2] != 3:
            raise ValueError(f"albedo must be (H, W, 3), got {self.albedo.shape}")
        if self.roughness.ndim != 2 or self.visibility.ndim != 2:
            raise ValueError("roughness and visibility must be (H, W)")
        if self.albedo.min() < 0 or self.albedo.max() > 1:
            raise ValueError("albedo texels must lie in [0, 1]")
        if self.roughness.min() < R_MIN - 1e-12 or self.roughness.max() > 1:
            raise ValueError(f"roughness texels must lie in [{R_MIN}, 1]")
        if self.visibility.min() < 0 or self.visibility.max() > 1:
            raise ValueError("visibility texels must lie in [0, 1]")

    @classmethod
    def uniform(cls, mesh: TriMesh, albedo=(1.0, 1.0, 1.0), roughness: float = 0.3,
                visibility: float = 1.0, tex_res: int = 1, q_ref=None) -> "AlpModel":
        """Constant-material model; handy for probes and tests."""
        h = w = tex_res
        return cls(
            mesh=mesh,
            albedo=np.broadcast_to(np.asarray(albedo, dtype=np.float64), (h, w, 3)).copy(),
            roughness=np.full((h, w), float(roughness)),
            visibility=np.full((h, w), float(visibility)),
            q_ref=np.array([1.0, 0.0, 0.0, 0.0]) if q_ref is None else q_ref,
        )


@dataclass
class GBuffer:
    hit: np.ndarray  # (H, W) bool
    tri: np.ndarray  # (H, W) int32, -1 for miss
    position: np.ndarray  # (H, W, 3)
    normal: np.ndarray  # (H, W, 3)
    uv: np.ndarray  # (H, W, 2)
    coverage: np.ndarray  # (H, W)
    view_dir: np.ndarray  # (H, W, 3) unit, surface toward camera
    tangent1: np.ndarray  # (H, W, 3)
    tangent2: np.ndarray  # (H, W, 3)
    aa_width: float
    # silhouette bookkeeping for the coverage gradient
    segments: np.ndarray  # (E, 2, 2) screen px
    seg_vert_ids: np.ndarray  # (E, 2)
    edge_dist: np.ndarray  # (H, W)
    seg_idx: np.ndarray  # (H, W) int32
    seg_t: np.ndarray  # (H, W)

    @property
    def shape(self):
        return self.hit.shape


@dataclass
class RenderOutput:
    image: HdrImage
    mask: MaskImage
    sample_count: np.ndarray  # (H, W) int32


@dataclass
class Scene:
    model: AlpModel
    pose: PoseScale
    cam: PinholeCamera
    env: EnvMap
    spp: int = 64
    seed: int = 0
    aa_width: float = DEFAULT_AA_WIDTH


@dataclass
class RenderGradients:
    d_env_theta: np.ndarray  # matches env.theta
    d_translation: np.ndarray  # (3,)
    d_rotation: np.ndarray  # (3,) tangent-space
    d_log_scale: float
    d_albedo: np.ndarray  # matches model.albedo
    d_roughness: np.ndarray  # matches model.roughness
    d_visibility: np.ndarray  # matches model.visibility


def rasterize(mesh: TriMesh, pose: PoseScale, cam: PinholeCamera,
              aa_width: float = DEFAULT_AA_WIDTH) -> GBuffer:
    """Nearest-triangle visibility at pixel centers plus soft coverage."""
    origin, dirs = cam.pixel_rays()
    h, w = cam.height, cam.width

    rot = to_matrix(pose.rotation)
    o_obj = rot.T @ (origin - pose.translation) / pose.scale
    d_obj = dirs @ rot  # rows are R^T d

    tri_flat = backend.raycast(o_obj, d_obj, mesh)
    tri = tri_flat.reshape(h, w)
    hit = tri >= 0

    position = np.zeros((h, w, 3))
    normal = np.zeros((h, w, 3))
    uv = np.zeros((h, w, 2))
    t1 = np.zeros((h, w, 3))
    t2 = np.zeros((h, w, 3))
    view_dir = -dirs.reshape(h, w, 3)

    if hit.any():
        ii, jj = np.nonzero(hit)
        attrs = geometry.pixel_attributes(
            mesh, pose, cam, tri[ii, jj], dirs.reshape(h, w, 3)[ii, jj]
        )
        position[ii, jj] = attrs["position"]
        normal[ii, jj] = attrs["normal"]
        uv[ii, jj] = attrs["uv"]
        t1[ii, jj] = attrs["t1"]
        t2[ii, jj] = attrs["t2"]

    segments, seg_vids = silhouette.silhouette_segments(mesh, pose, cam)
    dist, seg_idx, seg_t = silhouette.edge_distances(hit, segments)
    if segments.shape[0] == 0:
        coverage = hit.astype(np.float64)
    else:
        coverage = np.where(hit, np.clip(dist / aa_width, 0.0, 1.0), 0.0)

    return GBuffer(
        hit=hit, tri=tri, position=position, normal=normal, uv=uv,
        coverage=coverage, view_dir=view_dir, tangent1=t1, tangent2=t2,
        aa_width=aa_width, segments=segments, seg_vert_ids=seg_vids,
        edge_dist=dist, seg_idx=seg_idx, seg_t=seg_t,
    )


def _flat_inputs(gbuf: GBuffer):
    h, w = gbuf.shape
    ii, jj = np.nonzero(gbuf.hit)
    pids = (ii * w + jj).astype(np.int64)
    return ii, jj, pids


def shade(gbuf: GBuffer, model: AlpModel, env: EnvMap, spp: int,
          rng_seed: int) -> RenderOutput:
    """Monte Carlo image-based shading of a G-buffer."""
    if spp < 1:
        raise ValueError("spp must be >= 1")
    h, w = gbuf.shape
    image = np.zeros((h, w, 3))
    count = np.zeros((h, w), dtype=np.int32)
    if gbuf.hit.any():
        ii, jj, pids = _flat_inputs(gbuf)
        s = backend.shade_forward(
            pids, gbuf.view_dir[ii, jj], gbuf.normal[ii, jj],
            gbuf.tangent1[ii, jj], gbuf.tangent2[ii, jj], gbuf.uv[ii, jj],
            model.albedo, model.roughness, model.visibility, env.radiance,
            spp, rng_seed,
        )
        image[ii, jj] = gbuf.coverage[ii, jj][:, None] * s
        count[ii, jj] = spp
    return RenderOutput(
        image=HdrImage(image), mask=MaskImage(gbuf.coverage.copy()),
        sample_count=count,
    )


def render(scene: Scene) -> RenderOutput:
    gbuf = rasterize(scene.model.mesh, scene.pose, scene.cam, scene.aa_width)
    return shade(gbuf, scene.model, scene.env, scene.spp, scene.seed)


@dataclass
class RenderContext:
    """Forward-pass state kept alive for a later backward call."""

    scene: Scene
    gbuf: GBuffer
    output: RenderOutput


def render_forward(scene: Scene) -> tuple[RenderOutput, RenderContext]:
    """Render and retain what the backward pass needs.

    Losses can be evaluated on the output before calling render_backward
    with their adjoints; the backward pass reuses the G-buffer instead of
    re-rasterizing.
    """
    gbuf = rasterize(scene.model.mesh, scene.pose, scene.cam, scene.aa_width)
    out = shade(gbuf, scene.model, scene.env, scene.spp, scene.seed)
    return out, RenderContext(scene=scene, gbuf=gbuf, output=out)


def render_backward(ctx: RenderContext, adj_image, adj_mask=None) -> RenderGradients:
    """Gradients of sum(adj_image*image) + sum(adj_mask*mask) for a context."""
    scene = ctx.scene
    model, env, pose = scene.model, scene.env, scene.pose
    h, w = scene.cam.height, scene.cam.width
    adj_image = adj_image.pixels if isinstance(adj_image, HdrImage) else np.asarray(adj_image, dtype=np.float64)
    if adj_image.shape != (h, w, 3):
        raise DimensionMismatch(f"adjoint image {adj_image.shape} vs render {(h, w, 3)}")
    if adj_mask is None:
        adj_mask = np.zeros((h, w))
    else:
        adj_mask = adj_mask.values if isinstance(adj_mask, MaskImage) else np.asarray(adj_mask, dtype=np.float64)
        if adj_mask.shape != (h, w):
            raise DimensionMismatch(f"adjoint mask {adj_mask.shape} vs render {(h, w)}")

    gbuf = ctx.gbuf
    grads = RenderGradients(
        d_env_theta=np.zeros_like(env.theta),
        d_translation=np.zeros(3),
        d_rotation=np.zeros(3),
        d_log_scale=0.0,
        d_albedo=np.zeros_like(model.albedo),
        d_roughness=np.zeros_like(model.roughness),
        d_visibility=np.zeros_like(model.visibility),
    )
    if not gbuf.hit.any():
        return grads

    ii, jj, pids = _flat_inputs(gbuf)
    dirs = -gbuf.view_dir[ii, jj]
    attrs = geometry.pixel_attributes(model.mesh, pose, scene.cam,
                                      gbuf.tri[ii, jj], dirs)
    cov = gbuf.coverage[ii, jj]
    g_s = adj_image[ii, jj] * cov[:, None]

    out = backend.shade_backward(
        pids, attrs["wo"], attrs["normal"], attrs["t1"], attrs["t2"],
        attrs["uv"], model.albedo, model.roughness, model.visibility,
        env.radiance, sigmoid(env.theta), scene.spp, scene.seed, g_s,
    )
    s_px = out["s"]

    grads.d_env_theta += out["g_env_theta"]

    # material texel scatters and the uv chain through each lookup
    uv_px = attrs["uv"]
    kernels_np.scatter_bilinear(grads.d_albedo, uv_px, out["g_albedo_px"])
    kernels_np.scatter_bilinear(grads.d_roughness, uv_px, out["g_rough_px"])
    kernels_np.scatter_bilinear(grads.d_visibility, uv_px, out["g_vis_px"])
    g_uv = (
        kernels_np.tex_uv_gradient(model.albedo, uv_px, out["g_albedo_px"])
        + kernels_np.tex_uv_gradient(model.roughness, uv_px, out["g_rough_px"])
        + kernels_np.tex_uv_gradient(model.visibility, uv_px, out["g_vis_px"])
    )

    g_t, g_rot, g_logs = geometry.geometry_backward(
        pose, attrs, g_uv, out["g_n"], out["g_t1"], out["g_t2"]
    )
    grads.d_translation += g_t
    grads.d_rotation += g_rot
    grads.d_log_scale += g_logs

    # coverage adjoint: image = coverage * S, mask = coverage
    g_cov = np.zeros((h, w))
    g_cov[ii, jj] = np.einsum("pj,pj->p", adj_image[ii, jj], s_px)
    g_cov += adj_mask * gbuf.hit
    band = gbuf.coverage < 1.0
    g_cov *= band  # outside the feather band coverage is locally constant
    c_t, c_rot, c_logs = silhouette.coverage_pose_gradient(
        g_cov, gbuf.hit, gbuf.edge_dist, gbuf.seg_idx, gbuf.seg_t,
        gbuf.segments, gbuf.seg_vert_ids, model.mesh, pose, scene.cam,
        gbuf.aa_width,
    )
    grads.d_translation += c_t
    grads.d_rotation += c_rot
    grads.d_log_scale += c_logs
    return grads


def render_with_gradients(scene: Scene, adj_image, adj_mask=None):
    """Forward render plus gradients of sum(adj_image*image) + sum(adj_mask*mask).

    Returns (RenderOutput, RenderGradients); the forward output equals
    ``render(scene)`` bit for bit.
    """
    out, ctx = render_forward(scene)
    return out, render_backward(ctx, adj_image, adj_mask)


def sample_shading_directions(gbuf: GBuffer, model: AlpModel, spp: int,
                              seed: int) -> np.ndarray:
    """Incident directions the shader would draw for this G-buffer, (M, 3).

    Always evaluated with the numpy sampler so confidence maps do not
    depend on the active backend.
    """
    if not gbuf.hit.any():
        return np.zeros((0, 3))
    ii, jj, pids = _flat_inputs(gbuf)
    return kernels_np.sample_directions(
        pids, gbuf.view_dir[ii, jj], gbuf.normal[ii, jj],
        gbuf.tangent1[ii, jj], gbuf.tangent2[ii, jj], gbuf.uv[ii, jj],
        model.roughness, spp, seed,
    )
