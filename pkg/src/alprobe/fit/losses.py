"""Loss terms for the inverse problems.

Total objective: rgb + mask + lambda1 * decay(t) * pose_reg
+ lambda2 * light_reg.  Each term here also exposes the adjoints the
optimizer needs: gradients with respect to the rendered image, the rendered
mask, the rotation tangent, or environment parameters.

The RGB term lives in log(1+x) so bright texels cannot dominate, and its
support is the union of the rendered and reference masks with continuous
weights w = max(m_render, m_ref); that keeps the loss differentiable as
coverage slides around.  The Chamfer half of the mask loss is treated as a
constant during backprop (its L1 companion and the barycenter regularizer
carry the pose gradient).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..core import quaternion as quat
from ..core.image import mask_barycenter
from ..errors import DimensionMismatch, EmptyMask

_EPS = 1e-12


def _check_shape(a, b):
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} vs {b.shape}")


def rgb_loss(render_img: np.ndarray, render_mask: np.ndarray, ref_img: np.ndarray,
             ref_mask: np.ndarray, with_grad: bool = False):
    """Weighted mean |log1p(a) - log1p(b)| over the mask union."""
    _check_shape(render_img, ref_img)
    _check_shape(render_mask, ref_mask)
    w = np.maximum(render_mask, ref_mask)
    total_w = w.sum()
    if total_w <= _EPS:
        if with_grad:
            return 0.0, np.zeros_like(render_img), np.zeros_like(render_mask)
        return 0.0

    diff = np.log1p(render_img) - np.log1p(ref_img)
    per_px = np.abs(diff).mean(axis=2)
    loss = float((w * per_px).sum() / total_w)
    if not with_grad:
        return loss

    g_img = (
        (w / total_w)[:, :, None]
        * np.sign(diff)
        / (3.0 * (1.0 + render_img))
    )
    # w = max(m_render, m_ref) passes gradient where the render mask wins
    sel = render_mask > ref_mask
    g_mask = np.where(sel, (per_px - loss) / total_w, 0.0)
    return loss, g_img, g_mask


def _boundary_points(mask: np.ndarray) -> np.ndarray:
    """Integer pixel coords (x, y) of binarized boundary pixels.

    A pixel is boundary when it is on (> 0.5) and any 4-neighbor is off;
    the image border counts as off.
    """
    b = mask > 0.5
    padded = np.pad(b, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    ii, jj = np.nonzero(b & ~interior)
    return np.stack([jj, ii], axis=-1).astype(np.float64)


def chamfer_distance(m_a: np.ndarray, m_b: np.ndarray) -> float:
    """Symmetric mean boundary-to-boundary distance over the image diagonal."""
    _check_shape(m_a, m_b)
    pa = _boundary_points(m_a)
    pb = _boundary_points(m_b)
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        return 0.0
    diag = float(np.hypot(m_a.shape[1], m_a.shape[0]))
    d_ab = cKDTree(pb).query(pa)[0].mean()
    d_ba = cKDTree(pa).query(pb)[0].mean()
    return float(0.5 * (d_ab + d_ba) / diag)


def mask_loss(m_render: np.ndarray, m_ref: np.ndarray, with_grad: bool = False):
    """Mean |difference| over all pixels plus the symmetric Chamfer term."""
    _check_shape(m_render, m_ref)
    diff = m_render - m_ref
    l1 = float(np.abs(diff).mean())
    loss = l1 + chamfer_distance(m_render, m_ref)
    if not with_grad:
        return loss
    g_mask = np.sign(diff) / diff.size
    return loss, g_mask


def pose_reg(m_render: np.ndarray, m_ref: np.ndarray, q: np.ndarray,
             q_ref: np.ndarray, with_grad: bool = False):
    """Squared normalized barycenter offset plus squared quaternion distance.

    An empty render mask contributes the constant 1 for the barycenter term
    (its pull is supplied by the mask L1 gradient in that regime).
    """
    _check_shape(m_render, m_ref)
    h, w = m_ref.shape
    diag_sq = float(w * w + h * h)
    b_ref = np.array(mask_barycenter(m_ref))  # raises EmptyMask

    total = m_render.sum()
    if total <= _EPS:
        bary_term = 1.0
        g_mask = np.zeros_like(m_render)
        b_r = None
    else:
        b_r = np.array(mask_barycenter(m_render))
        delta = b_r - b_ref
        bary_term = float(delta @ delta / diag_sq)

    q = quat.normalize(q)
    q_c = quat.canonical(q_ref, reference=q)
    dq = q - q_c
    quat_term = float(dq @ dq)
    value = bary_term + quat_term
    if not with_grad:
        return value

    if b_r is not None:
        jj, ii = np.meshgrid(np.arange(w), np.arange(h))
        g_b = 2.0 * (b_r - b_ref) / diag_sq
        g_mask = (g_b[0] * (jj - b_r[0]) + g_b[1] * (ii - b_r[1])) / total

    # rotation tangent: q(d) = exp(d) q, dq/dd_i at 0 is 0.5 e_i x q
    g_rot = np.zeros(3)
    for i in range(3):
        e = np.zeros(4)
        e[1 + i] = 0.5
        g_rot[i] = 2.0 * dq @ quat.multiply(e, q)
    return value, g_mask, g_rot


def total_loss(rgb: float, mask: float, pose: float, light: float,
               lambda1: float, lambda2: float, decay: float) -> float:
    return rgb + mask + lambda1 * decay * pose + lambda2 * light


def decay_factor(step: int, t_decay: int) -> float:
    """Linear ramp from 1 at step 0 to exactly 0 at and after ``t_decay``."""
    if t_decay <= 0:
        return 0.0
    return max(0.0, 1.0 - step / t_decay)
