"""Loss terms: values against closed forms and brute-force oracles, plus
finite-difference checks of every adjoint the optimizer consumes."""
import numpy as np
import pytest

from alprobe.core import quaternion as quat
from alprobe.errors import DimensionMismatch, EmptyMask
from alprobe.fit import (chamfer_distance, decay_factor, mask_loss, pose_reg,
                         rgb_loss, total_loss)


def _disc(h, w, cy, cx, r):
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return ((ii - cy) ** 2 + (jj - cx) ** 2 <= r * r).astype(np.float64)


def _brute_chamfer(m_a, m_b):
    """Independent O(N^2) re-derivation of the symmetric boundary distance."""
    def boundary(m):
        on = m > 0.5
        h, w = on.shape
        pts = []
        for i in range(h):
            for j in range(w):
                if not on[i, j]:
                    continue
                for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    ni, nj = i + di, j + dj
                    if not (0 <= ni < h and 0 <= nj < w) or not on[ni, nj]:
                        pts.append((j, i))
                        break
        return np.asarray(pts, dtype=np.float64)

    pa, pb = boundary(m_a), boundary(m_b)
    if len(pa) == 0 or len(pb) == 0:
        return 0.0
    d = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    diag = np.hypot(m_a.shape[1], m_a.shape[0])
    return 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean()) / diag


# ---------------------------------------------------------------- rgb loss

def test_rgb_loss_zero_on_identical():
    rng = np.random.default_rng(0)
    img = rng.uniform(0.0, 5.0, size=(9, 7, 3))
    mask = (rng.uniform(size=(9, 7)) > 0.4).astype(np.float64)
    assert rgb_loss(img, mask, img.copy(), mask.copy()) == 0.0


def test_rgb_loss_unit_offset_is_log_two():
    # ref is zero in-mask, render is one: |log1p(1) - log1p(0)| = log 2
    mask = np.zeros((8, 8))
    mask[2:6, 3:7] = 1.0
    ref = np.zeros((8, 8, 3))
    img = mask[:, :, None] * np.ones(3)
    assert rgb_loss(img, mask, ref, mask) == pytest.approx(np.log(2.0), abs=1e-15)


def test_rgb_loss_symmetric_in_images():
    rng = np.random.default_rng(1)
    a = rng.uniform(0.0, 4.0, size=(6, 6, 3))
    b = rng.uniform(0.0, 4.0, size=(6, 6, 3))
    ma = (rng.uniform(size=(6, 6)) > 0.5).astype(np.float64)
    mb = (rng.uniform(size=(6, 6)) > 0.5).astype(np.float64)
    assert rgb_loss(a, ma, b, mb) == pytest.approx(rgb_loss(b, mb, a, ma), rel=1e-15)


def test_rgb_loss_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        rgb_loss(np.zeros((4, 4, 3)), np.zeros((4, 4)),
                 np.zeros((4, 5, 3)), np.zeros((4, 5)))


def test_rgb_loss_image_gradient_matches_fd():
    rng = np.random.default_rng(2)
    img = rng.uniform(0.5, 3.0, size=(5, 5, 3))
    ref = img + rng.choice([-1.0, 1.0], size=img.shape) * rng.uniform(
        0.2, 0.8, size=img.shape)
    ref = np.clip(ref, 0.05, None)
    mask = (rng.uniform(size=(5, 5)) > 0.3).astype(np.float64)
    _, g_img, _ = rgb_loss(img, mask, ref, mask, with_grad=True)
    h = 1e-6
    for (i, j, c) in [(0, 0, 0), (2, 3, 1), (4, 4, 2), (1, 2, 0)]:
        up = img.copy(); up[i, j, c] += h
        dn = img.copy(); dn[i, j, c] -= h
        fd = (rgb_loss(up, mask, ref, mask) - rgb_loss(dn, mask, ref, mask)) / (2 * h)
        assert fd == pytest.approx(g_img[i, j, c], rel=1e-5, abs=1e-9)


def test_rgb_loss_mask_gradient_matches_fd():
    rng = np.random.default_rng(3)
    img = rng.uniform(0.5, 3.0, size=(5, 5, 3))
    ref = rng.uniform(0.5, 3.0, size=(5, 5, 3))
    m_ref = np.full((5, 5), 0.2)
    m_render = rng.uniform(0.4, 0.9, size=(5, 5))  # render mask strictly wins
    _, _, g_mask = rgb_loss(img, m_render, ref, m_ref, with_grad=True)
    h = 1e-7
    for (i, j) in [(0, 1), (3, 3), (4, 0)]:
        up = m_render.copy(); up[i, j] += h
        dn = m_render.copy(); dn[i, j] -= h
        fd = (rgb_loss(img, up, ref, m_ref) - rgb_loss(img, dn, ref, m_ref)) / (2 * h)
        assert fd == pytest.approx(g_mask[i, j], rel=1e-4, abs=1e-9)


# --------------------------------------------------------------- mask loss

def test_mask_loss_zero_on_identical():
    m = _disc(24, 24, 12.0, 12.0, 5.0)
    assert mask_loss(m, m.copy()) == 0.0


def test_chamfer_matches_brute_force_and_offset_scaling():
    h, w, r, d = 48, 96, 6.0, 40
    a = _disc(h, w, 24.0, 20.0, r)
    b = _disc(h, w, 24.0, 20.0 + d, r)
    got = chamfer_distance(a, b)
    assert got == pytest.approx(_brute_chamfer(a, b), abs=1e-12)
    # far-separated equal discs: symmetric chamfer ~ (d - r) / diagonal
    assert got == pytest.approx(d / np.hypot(w, h), rel=0.2)


def test_chamfer_symmetric():
    rng = np.random.default_rng(4)
    a = (rng.uniform(size=(20, 20)) > 0.6).astype(np.float64)
    b = (rng.uniform(size=(20, 20)) > 0.6).astype(np.float64)
    assert chamfer_distance(a, b) == chamfer_distance(b, a)


def test_mask_loss_empty_mask_keeps_l1_term():
    m = _disc(16, 16, 8.0, 8.0, 4.0)
    empty = np.zeros((16, 16))
    assert mask_loss(empty, m) == pytest.approx(m.mean(), abs=1e-15)
    assert mask_loss(m, empty) == pytest.approx(m.mean(), abs=1e-15)


def test_mask_loss_gradient_matches_fd():
    # values kept away from the 0.5 binarization threshold so the chamfer
    # term is locally constant, as the backward pass assumes
    rng = np.random.default_rng(5)
    m = np.where(rng.uniform(size=(12, 12)) > 0.5,
                 rng.uniform(0.6, 1.0, size=(12, 12)),
                 rng.uniform(0.0, 0.4, size=(12, 12)))
    ref = np.where(rng.uniform(size=(12, 12)) > 0.5,
                   rng.uniform(0.6, 1.0, size=(12, 12)),
                   rng.uniform(0.0, 0.4, size=(12, 12)))
    _, g = mask_loss(m, ref, with_grad=True)
    h = 1e-7
    for (i, j) in [(0, 0), (5, 7), (11, 11)]:
        up = m.copy(); up[i, j] += h
        dn = m.copy(); dn[i, j] -= h
        fd = (mask_loss(up, ref) - mask_loss(dn, ref)) / (2 * h)
        assert fd == pytest.approx(g[i, j], rel=1e-6, abs=1e-12)


# ---------------------------------------------------------------- pose reg

def test_pose_reg_zero_when_aligned():
    m = _disc(20, 20, 10.0, 10.0, 4.0)
    q = quat.normalize(np.array([0.9, 0.1, -0.2, 0.3]))
    assert pose_reg(m, m.copy(), q, q.copy()) == 0.0


def test_pose_reg_double_cover():
    m = _disc(20, 20, 10.0, 10.0, 4.0)
    q = quat.normalize(np.array([0.5, 0.5, -0.5, 0.5]))
    assert pose_reg(m, m, q, -q) == 0.0


def test_pose_reg_corner_to_corner_normalization():
    h, w = 15, 20
    a = np.zeros((h, w)); a[0, 0] = 1.0
    b = np.zeros((h, w)); b[h - 1, w - 1] = 1.0
    q = quat.identity()
    want = ((w - 1) ** 2 + (h - 1) ** 2) / (w ** 2 + h ** 2)
    assert pose_reg(a, b, q, q) == pytest.approx(want, abs=1e-15)


def test_pose_reg_empty_render_mask_contributes_one():
    m = _disc(16, 16, 8.0, 8.0, 4.0)
    q = quat.identity()
    assert pose_reg(np.zeros((16, 16)), m, q, q) == pytest.approx(1.0, abs=1e-15)


def test_pose_reg_empty_reference_raises():
    m = _disc(16, 16, 8.0, 8.0, 4.0)
    q = quat.identity()
    with pytest.raises(EmptyMask):
        pose_reg(m, np.zeros((16, 16)), q, q)


def test_pose_reg_mask_gradient_matches_fd():
    rng = np.random.default_rng(6)
    m = rng.uniform(0.1, 1.0, size=(10, 10))
    ref = _disc(10, 10, 3.0, 6.0, 2.0)
    q = quat.identity()
    _, g_mask, _ = pose_reg(m, ref, q, q, with_grad=True)
    h = 1e-6
    for (i, j) in [(0, 0), (4, 4), (9, 2)]:
        up = m.copy(); up[i, j] += h
        dn = m.copy(); dn[i, j] -= h
        fd = (pose_reg(up, ref, q, q) - pose_reg(dn, ref, q, q)) / (2 * h)
        assert fd == pytest.approx(g_mask[i, j], rel=1e-5, abs=1e-10)


def test_pose_reg_rotation_gradient_matches_fd():
    m = _disc(12, 12, 6.0, 6.0, 3.0)
    q_ref = quat.normalize(np.array([0.95, 0.2, -0.1, 0.15]))
    q = quat.multiply(quat.from_tangent(np.array([0.05, -0.08, 0.03])), q_ref)
    _, _, g_rot = pose_reg(m, m, q, q_ref, with_grad=True)
    h = 1e-6
    for axis in range(3):
        delta = np.zeros(3); delta[axis] = h
        up = pose_reg(m, m, quat.multiply(quat.from_tangent(delta), q), q_ref)
        dn = pose_reg(m, m, quat.multiply(quat.from_tangent(-delta), q), q_ref)
        fd = (up - dn) / (2 * h)
        assert fd == pytest.approx(g_rot[axis], rel=1e-5, abs=1e-10)


# -------------------------------------------------------- total and decay

def test_total_loss_zero_when_unweighted_terms_vanish():
    img = np.ones((6, 6, 3))
    mask = np.ones((6, 6))
    rgb = rgb_loss(img, mask, img, mask)
    msk = mask_loss(mask, mask)
    assert total_loss(rgb, msk, 0.7, 0.9, 0.0, 0.0, 1.0) == 0.0


def test_total_loss_linear_in_lambda2():
    args = dict(rgb=0.31, mask=0.07, pose=0.9, light=1.7)
    lo = total_loss(args["rgb"], args["mask"], args["pose"], args["light"],
                    1.0, 0.05, 0.5)
    hi = total_loss(args["rgb"], args["mask"], args["pose"], args["light"],
                    1.0, 0.10, 0.5)
    assert hi - lo == pytest.approx(0.05 * args["light"], abs=1e-15)


def test_decay_reaches_exact_zero():
    t_decay = 240
    vals = [decay_factor(s, t_decay) for s in range(401)]
    assert vals[0] == 1.0
    assert all(vals[i + 1] <= vals[i] for i in range(400))
    assert vals[t_decay] == 0.0
    assert all(v == 0.0 for v in vals[t_decay:])
    assert decay_factor(120, t_decay) == pytest.approx(0.5, abs=1e-15)


def test_total_loss_drops_pose_term_after_decay():
    before = total_loss(0.2, 0.1, 3.0, 0.4, 1.0, 0.05,
                        decay_factor(239, 240))
    after = total_loss(0.2, 0.1, 3.0, 0.4, 1.0, 0.05,
                       decay_factor(240, 240))
    assert after == 0.2 + 0.1 + 0.05 * 0.4
    assert before > after
