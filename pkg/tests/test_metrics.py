"""Probe relighting and the image metrics built on it: closed-form
identities, a brute-force alpha sweep for si_rmse, and the MC noise floor."""
import numpy as np
import pytest
from scipy import ndimage

from alprobe.core.image import HdrImage, MaskImage
from alprobe.envlight import EnvMap
from alprobe.errors import DegenerateReference, EmptyMask
from alprobe.metrics import (DIFFUSE, MIRROR, SHINY, ProbeMaterial,
                             angular_error, psnr, relight_sphere, rmse,
                             si_rmse)
from alprobe.render import R_MIN
from oracles import smooth_env


def _pair(seed, shape=(8, 8, 3), lo=0.1, hi=3.0):
    rng = np.random.default_rng(seed)
    a = HdrImage(rng.uniform(lo, hi, size=shape))
    b = HdrImage(rng.uniform(lo, hi, size=shape))
    return a, b


# ------------------------------------------------------------ materials

def test_probe_material_presets():
    assert MIRROR.roughness == R_MIN
    assert SHINY.roughness == 0.25
    assert DIFFUSE.kind == "diffuse"
    with pytest.raises(ValueError):
        ProbeMaterial("velvet")


# ------------------------------------------------------------- relight

def test_diffuse_sphere_under_constant_env():
    c = np.array([1.5, 1.0, 2.0])
    env = EnvMap.constant(c, height=8)
    img, mask = relight_sphere(env, DIFFUSE, res=48, spp=64, seed=2)
    interior = mask.values == 1.0
    assert interior.sum() > 200
    # cosine sampling of a constant field has zero variance: exactly a*c
    got = img.pixels[interior]
    assert np.allclose(got, 0.8 * c, atol=1e-12)


def test_mirror_sphere_single_texel_gives_one_highlight():
    rad = np.full((16, 32, 3), 0.05)
    rad[8, 31] = 50.0  # direction toward the camera, reflected at the center
    env = EnvMap.from_radiance(rad)
    img, mask = relight_sphere(env, MIRROR, res=96, spp=64, seed=5)
    lum = img.pixels.sum(axis=2)
    bright = lum > 5.0
    assert bright.any()
    _, n_regions = ndimage.label(bright, structure=np.ones((3, 3)))
    assert n_regions == 1


def test_relight_deterministic():
    env = smooth_env(height=8, seed=4)
    a, _ = relight_sphere(env, SHINY, res=32, spp=16, seed=9)
    b, _ = relight_sphere(env, SHINY, res=32, spp=16, seed=9)
    assert np.array_equal(a.pixels, b.pixels)


# ------------------------------------------------------- angular error

def test_angular_error_identity_and_scale():
    a, b = _pair(0)
    # arccos of a clipped dot product leaves ~1e-7 deg of fp noise
    assert angular_error(a, a) < 1e-6
    scaled = HdrImage(3.7 * a.pixels)
    assert angular_error(scaled, a) < 1e-6
    assert angular_error(HdrImage(0.25 * a.pixels), b) == pytest.approx(
        angular_error(a, b), abs=1e-9)


def test_angular_error_orthogonal_channels():
    red = np.zeros((4, 4, 3)); red[..., 0] = 1.0
    green = np.zeros((4, 4, 3)); green[..., 1] = 2.0
    assert angular_error(HdrImage(red), HdrImage(green)) == 90.0


def test_angular_error_skips_zero_pixels():
    a = np.zeros((1, 2, 3)); b = np.zeros((1, 2, 3))
    a[0, 0, 0] = 1.0; b[0, 0, 1] = 1.0  # orthogonal pair
    b[0, 1] = 0.3                        # a is zero here: skipped
    assert angular_error(HdrImage(a), HdrImage(b)) == 90.0


def test_angular_error_empty_mask():
    a, b = _pair(1)
    with pytest.raises(EmptyMask):
        angular_error(a, b, MaskImage(np.zeros((8, 8))))


# ------------------------------------------------------------- si_rmse

def test_si_rmse_forgives_global_scale():
    _, b = _pair(2)
    assert si_rmse(HdrImage(b.pixels / 7.0), b) < 1e-12
    assert si_rmse(b, b) < 1e-12


def test_si_rmse_matches_alpha_sweep():
    a, b = _pair(3)
    # rmse(alpha*a, b)^2 is quadratic in alpha; sweep it densely
    pa, pb = a.pixels.ravel(), b.pixels.ravel()
    qa = np.mean(pa * pa)
    qab = np.mean(pa * pb)
    qb = np.mean(pb * pb)
    alphas = np.linspace(0.0, 4.0, 400001)
    swept = np.sqrt(np.maximum(
        alphas ** 2 * qa - 2.0 * alphas * qab + qb, 0.0)).min()
    assert si_rmse(a, b) == pytest.approx(swept, abs=1e-6)


def test_si_rmse_never_exceeds_rmse():
    for seed in range(20):
        a, b = _pair(100 + seed)
        assert si_rmse(a, b) <= rmse(a, b) + 1e-12


def test_si_rmse_degenerate_candidate():
    _, b = _pair(4)
    with pytest.raises(DegenerateReference):
        si_rmse(HdrImage(np.zeros((8, 8, 3))), b)


# ---------------------------------------------------------------- psnr

def test_psnr_identities():
    a, _ = _pair(5)
    assert psnr(a, a) == 99.0
    peak = 2.5
    b = HdrImage(a.pixels + peak)
    assert psnr(a, b, peak=peak) == pytest.approx(0.0, abs=1e-12)


def test_psnr_gains_three_db_per_mse_halving():
    a, _ = _pair(6)
    err = np.full_like(a.pixels, 0.1)
    full = psnr(HdrImage(a.pixels + err), a, peak=1.0)
    half = psnr(HdrImage(a.pixels + err / np.sqrt(2.0)), a, peak=1.0)
    assert half - full == pytest.approx(10.0 * np.log10(2.0), abs=1e-9)


def test_psnr_argument_checks():
    a, b = _pair(7)
    with pytest.raises(EmptyMask):
        psnr(a, b, MaskImage(np.zeros((8, 8))))
    with pytest.raises(ValueError):
        psnr(a, b, peak=0.0)


# -------------------------------------------------------- noise floor

@pytest.mark.parametrize("mat", [DIFFUSE, SHINY], ids=["diffuse", "shiny"])
def test_relight_noise_floor_below_half_degree(mat):
    env = smooth_env(height=16, seed=6)
    a, mask = relight_sphere(env, mat, res=64, spp=1024, seed=101)
    b, _ = relight_sphere(env, mat, res=64, spp=1024, seed=202)
    assert angular_error(a, b, mask) < 0.5
