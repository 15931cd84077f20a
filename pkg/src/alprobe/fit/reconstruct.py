"""Multi-view recovery of spatially-varying metallic surface properties.

Given several HDR captures of the object under known environment lighting
and known cameras, fits per-texel albedo, roughness and visibility maps
(plus an optional shared pose refinement) by gradient descent on the same
photometric losses the lighting stage uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..brdf import R_MIN
from ..core import quaternion
from ..core.image import HdrImage, MaskImage
from ..core.pose import PoseScale
from ..envlight import EnvMap, sigmoid
from ..errors import DimensionMismatch, NonFiniteLoss, TooFewViews
from ..render import AlpModel, Scene, rasterize, render_backward, render_forward
from ..render.rng import derive_seed
from .estimate import FitConfig
from .losses import mask_loss, rgb_loss
from .optim import Adam


@dataclass
class Capture:
    """One posed view: HDR image, coverage mask, and its camera."""

    image: HdrImage
    mask: MaskImage
    cam: object

    def __post_init__(self):
        h, w = self.cam.height, self.cam.width
        if self.image.pixels.shape != (h, w, 3):
            raise DimensionMismatch(
                f"capture image {self.image.pixels.shape} vs camera {(h, w, 3)}")
        if self.mask.values.shape != (h, w):
            raise DimensionMismatch(
                f"capture mask {self.mask.values.shape} vs camera {(h, w)}")


@dataclass
class ReconResult:
    model: AlpModel
    pose: PoseScale
    loss_trace: np.ndarray  # (steps, 3): total, rgb, mask


def _logit(p: float) -> float:
    return float(np.log(p / (1.0 - p)))


def _model_from_raw(mesh, raw_a, raw_r, raw_v, q_ref) -> AlpModel:
    # sigmoid keeps every texel inside its legal range by construction
    return AlpModel(
        mesh=mesh,
        albedo=sigmoid(raw_a),
        roughness=R_MIN + (1.0 - R_MIN) * sigmoid(raw_r),
        visibility=sigmoid(raw_v),
        q_ref=q_ref,
    )


def _inverse_sigmoid(x: np.ndarray) -> np.ndarray:
    p = np.clip(x, 1e-6, 1.0 - 1e-6)
    return np.log(p / (1.0 - p))


def reconstruct_alp(captures: list[Capture], envs: list[EnvMap], mesh,
                    cfg: FitConfig | None = None,
                    init_pose: PoseScale | None = None,
                    optimize_pose: bool = True,
                    init_model: AlpModel | None = None,
                    optimize_material: bool = True) -> ReconResult:
    """Fit textured material maps to posed captures under known lighting.

    Needs at least three views.  The pose is shared across views and starts
    at ``init_pose`` (identity if omitted); with ``optimize_pose`` it is
    refined jointly with the textures.  Textures start flat (albedo 0.5,
    roughness 0.3, visibility near 1) unless ``init_model`` supplies them,
    and are parameterized through a sigmoid so they can never leave their
    valid ranges.  ``optimize_material=False`` freezes the textures, which
    turns this into a pose/scale-only refinement.
    """
    if cfg is None:
        cfg = FitConfig()
    if len(captures) < 3:
        raise TooFewViews(f"got {len(captures)} views, need at least 3")
    if len(envs) != len(captures):
        raise DimensionMismatch(
            f"{len(envs)} environments for {len(captures)} captures")

    if init_pose is None:
        init_pose = PoseScale(rotation=quaternion.identity(),
                              translation=np.zeros(3), scale=1.0)
    t = np.asarray(init_pose.translation, dtype=np.float64).copy()
    q = quaternion.normalize(np.asarray(init_pose.rotation, dtype=np.float64))
    log_s = float(np.log(init_pose.scale))
    q_ref = q.copy()

    if init_model is not None:
        raw_a = _inverse_sigmoid(init_model.albedo)
        raw_r = _inverse_sigmoid(
            (init_model.roughness - R_MIN) / (1.0 - R_MIN))
        raw_v = _inverse_sigmoid(init_model.visibility)
        res = raw_r.shape[0]
    else:
        res = cfg.tex_res
        raw_a = np.full((res, res, 3), 0.0)
        raw_r = np.full((res, res), _logit((0.3 - R_MIN) / (1.0 - R_MIN)))
        raw_v = np.full((res, res), _logit(0.98))

    lrs = {}
    if optimize_material:
        lrs.update(albedo=cfg.lr_material, rough=cfg.lr_material,
                   vis=cfg.lr_material)
    if optimize_pose:
        lrs.update(t=cfg.lr_pose, rot=cfg.lr_pose, log_s=cfg.lr_pose)
    if not lrs:
        raise ValueError("nothing to optimize")
    opt = Adam(lrs)

    n_views = len(captures)
    trace = np.zeros((cfg.steps, 3))

    for step in range(cfg.steps):
        pose = PoseScale(rotation=q, translation=t, scale=float(np.exp(log_s)))
        model = _model_from_raw(mesh, raw_a, raw_r, raw_v, q_ref)

        g_alb = np.zeros_like(raw_a)
        g_rough = np.zeros_like(raw_r)
        g_vis = np.zeros_like(raw_v)
        g_t = np.zeros(3)
        g_rot = np.zeros(3)
        g_logs = 0.0
        v_rgb_sum = 0.0
        v_mask_sum = 0.0

        for view, (cap, env) in enumerate(zip(captures, envs)):
            seed = derive_seed(cfg.seed, step * n_views + view)
            scene = Scene(model=model, pose=pose, cam=cap.cam, env=env,
                          spp=cfg.spp, seed=seed, aa_width=cfg.aa_width)
            out, ctx = render_forward(scene)
            img = out.image.pixels
            m = out.mask.values

            v_rgb, g_img, g_mask_rgb = rgb_loss(img, m, cap.image.pixels,
                                                cap.mask.values, with_grad=True)
            v_mask, g_mask_l1 = mask_loss(m, cap.mask.values, with_grad=True)
            v_rgb_sum += v_rgb
            v_mask_sum += v_mask

            grads = render_backward(ctx, g_img / n_views,
                                    (g_mask_rgb + g_mask_l1) / n_views)
            g_alb += grads.d_albedo
            g_rough += grads.d_roughness
            g_vis += grads.d_visibility
            g_t += grads.d_translation
            g_rot += grads.d_rotation
            g_logs += grads.d_log_scale

        v_rgb_sum /= n_views
        v_mask_sum /= n_views
        total = v_rgb_sum + v_mask_sum
        if not np.isfinite(total):
            raise NonFiniteLoss(f"loss diverged at step {step}")
        trace[step] = (total, v_rgb_sum, v_mask_sum)

        gd = {}
        if optimize_material:
            # chain through the sigmoid reparameterization
            sa = sigmoid(raw_a)
            sr = sigmoid(raw_r)
            sv = sigmoid(raw_v)
            gd["albedo"] = g_alb * sa * (1.0 - sa)
            gd["rough"] = g_rough * (1.0 - R_MIN) * sr * (1.0 - sr)
            gd["vis"] = g_vis * sv * (1.0 - sv)
        if optimize_pose:
            gd["t"] = g_t
            gd["rot"] = g_rot
            gd["log_s"] = np.array([g_logs])
        upd = opt.step(gd)

        if optimize_material:
            raw_a -= upd["albedo"]
            raw_r -= upd["rough"]
            raw_v -= upd["vis"]
        if optimize_pose:
            t -= upd["t"]
            log_s -= float(upd["log_s"][0])
            dq = quaternion.from_tangent(-upd["rot"])
            q = quaternion.normalize(quaternion.multiply(dq, q))

    pose = PoseScale(rotation=q, translation=t, scale=float(np.exp(log_s)))
    model = _model_from_raw(mesh, raw_a, raw_r, raw_v, q_ref)
    return ReconResult(model=model, pose=pose, loss_trace=trace)


def texel_view_counts(mesh, pose: PoseScale, cams, tex_res: int,
                      aa_width: float = 1.5) -> np.ndarray:
    """How many views see each texel at least once.

    Rasterizes the posed mesh into every camera and bins hit-pixel UVs to
    their nearest texel.  Texels observed in fewer than two views carry
    little signal, so reconstruction metrics usually mask on this.
    """
    counts = np.zeros((tex_res, tex_res), dtype=np.int32)
    for cam in cams:
        gbuf = rasterize(mesh, pose, cam, aa_width)
        if not gbuf.hit.any():
            continue
        uv = gbuf.uv[gbuf.hit]
        jj = np.floor(uv[:, 0] * tex_res).astype(np.int64) % tex_res
        ii = np.clip(np.floor(uv[:, 1] * tex_res).astype(np.int64), 0, tex_res - 1)
        seen = np.zeros((tex_res, tex_res), dtype=bool)
        seen[ii, jj] = True
        counts += seen
    return counts
