"""alprobe command line: render, estimate, reconstruct, relight, eval, confidence.

Exit codes: 0 success, 1 module error (single-line ``error: Type: message``
on stderr), 2 configuration/usage error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .. import metrics
from ..core.image import HdrImage
from ..envlight import EnvMap, confidence_map
from ..errors import AlprobeError, ConfigError
from ..fit import Capture, estimate_lighting, reconstruct_alp
from ..render import Scene, render
from ..render.rng import derive_seed
from . import config as cfgmod
from .compose import side_by_side
from .maskio import load_mask, save_mask
from .pfm import load_hdr, save_hdr


def _scene_common(cfg: dict):
    fit_cfg = cfgmod.load_fit_config(cfg)
    model = cfgmod.load_model(cfg, fit_cfg)
    cam = cfgmod.load_camera(cfgmod._require(cfg, "camera"))
    return fit_cfg, model, cam


def _load_env(cfg: dict, field: str = "env") -> EnvMap:
    path = cfgmod._existing_path(cfg, field)
    return EnvMap.from_radiance(load_hdr(path).pixels)


def cmd_render(cfg: dict) -> int:
    fit_cfg, model, cam = _scene_common(cfg)
    pose = cfgmod.load_pose(cfgmod._require(cfg, "pose"))
    env = _load_env(cfg)
    spp = int(cfg.get("spp", 64))
    seed = int(cfg.get("seed", 0))
    out_dir = cfgmod.output_dir(cfg)
    scene = Scene(model=model, pose=pose, cam=cam, env=env, spp=spp, seed=seed)
    result = render(scene)
    save_hdr(os.path.join(out_dir, "render.pfm"), result.image)
    save_mask(os.path.join(out_dir, "mask.png"), result.mask)
    cfgmod.write_manifest(out_dir, "render", cfg)
    return 0


def _write_trace(path, trace: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "total", "rgb", "mask", "pose_reg", "light_reg"])
        for i, row in enumerate(trace):
            w.writerow([i] + [f"{x:.10g}" for x in row])


def cmd_estimate(cfg: dict) -> int:
    fit_cfg, model, cam = _scene_common(cfg)
    ref = load_hdr(cfgmod._existing_path(cfg, "reference"))
    mask = load_mask(cfgmod._existing_path(cfg, "mask"))
    init_pose = cfgmod.load_pose(cfg["init_pose"]) if cfg.get("init_pose") else None
    freeze = bool(cfg.get("freeze_pose", False))
    if freeze and init_pose is None:
        raise ConfigError("init_pose", "freeze_pose requires an initial pose")
    out_dir = cfgmod.output_dir(cfg)

    result = estimate_lighting(ref, mask, model, cam, fit_cfg,
                               init_pose=init_pose, optimize_pose=not freeze)

    save_hdr(os.path.join(out_dir, "env.pfm"), HdrImage(result.env.radiance))
    cfgmod.save_pose(os.path.join(out_dir, "pose.json"), result.pose)
    _write_trace(os.path.join(out_dir, "loss_trace.csv"), result.loss_trace)
    scene = Scene(model=model, pose=result.pose, cam=cam, env=result.env,
                  spp=fit_cfg.psnr_spp, seed=derive_seed(fit_cfg.seed, 1 << 21),
                  aa_width=fit_cfg.aa_width)
    rerender = render(scene)
    side_by_side(os.path.join(out_dir, "composite.png"), ref, rerender.image)
    cfgmod.write_manifest(out_dir, "estimate", cfg)
    return 0


def cmd_reconstruct(cfg: dict) -> int:
    fit_cfg = cfgmod.load_fit_config(cfg)
    mesh_path = cfgmod._existing_path(cfg, "mesh")
    from ..core.mesh import load_obj
    mesh = load_obj(mesh_path)
    caps_spec = cfgmod._require(cfg, "captures")
    if not isinstance(caps_spec, list) or not caps_spec:
        raise ConfigError("captures", "must be a non-empty list")
    captures, envs = [], []
    for k, spec in enumerate(caps_spec):
        if not isinstance(spec, dict):
            raise ConfigError(f"captures[{k}]", "must be an object")
        img = load_hdr(cfgmod._existing_path(spec, "image"))
        msk = load_mask(cfgmod._existing_path(spec, "mask"))
        cam = cfgmod.load_camera(cfgmod._require(spec, "camera"))
        envs.append(_load_env(spec))
        captures.append(Capture(image=img, mask=msk, cam=cam))
    init_pose = cfgmod.load_pose(cfg["init_pose"]) if cfg.get("init_pose") else None
    out_dir = cfgmod.output_dir(cfg)

    result = reconstruct_alp(captures, envs, mesh, fit_cfg, init_pose=init_pose)

    save_hdr(os.path.join(out_dir, "albedo.pfm"), HdrImage(result.model.albedo))
    rough3 = np.repeat(result.model.roughness[:, :, None], 3, axis=2)
    save_hdr(os.path.join(out_dir, "roughness.pfm"), HdrImage(rough3))
    vis3 = np.repeat(result.model.visibility[:, :, None], 3, axis=2)
    save_hdr(os.path.join(out_dir, "visibility.pfm"), HdrImage(vis3))
    cfgmod.save_pose(os.path.join(out_dir, "pose.json"), result.pose)
    with open(os.path.join(out_dir, "loss_trace.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "total", "rgb", "mask"])
        for i, row in enumerate(result.loss_trace):
            w.writerow([i] + [f"{x:.10g}" for x in row])
    cfgmod.write_manifest(out_dir, "reconstruct", cfg)
    return 0


def cmd_relight(cfg: dict) -> int:
    env = _load_env(cfg)
    kind = cfg.get("material", "mirror")
    try:
        mat = metrics.ProbeMaterial(kind)
    except ValueError as e:
        raise ConfigError("material", str(e)) from None
    res = int(cfg.get("res", 128))
    spp = int(cfg.get("spp", 256))
    seed = int(cfg.get("seed", 0))
    out_dir = cfgmod.output_dir(cfg)
    img, mask = metrics.relight_sphere(env, mat, res=res, spp=spp, seed=seed)
    save_hdr(os.path.join(out_dir, "relight.pfm"), img)
    save_mask(os.path.join(out_dir, "relight_mask.png"), mask)
    cfgmod.write_manifest(out_dir, "relight", cfg)
    return 0


def cmd_eval(cfg: dict) -> int:
    a_path = cfgmod._existing_path(cfg, "eval_a")
    b_path = cfgmod._existing_path(cfg, "eval_b")
    out_dir = cfgmod.output_dir(cfg)
    rows = []
    if cfg.get("probes", False):
        # treat inputs as environment maps; compare via probe-sphere relights
        env_a = EnvMap.from_radiance(load_hdr(a_path).pixels)
        env_b = EnvMap.from_radiance(load_hdr(b_path).pixels)
        res = int(cfg.get("res", 128))
        spp = int(cfg.get("spp", 256))
        seed = int(cfg.get("seed", 0))
        for mat in (metrics.MIRROR, metrics.SHINY, metrics.DIFFUSE):
            ia, ma = metrics.relight_sphere(env_a, mat, res=res, spp=spp, seed=seed)
            ib, _ = metrics.relight_sphere(env_b, mat, res=res, spp=spp, seed=seed)
            rows.append((cfg.get("label", "probe"), mat.kind,
                         metrics.angular_error(ia, ib, ma),
                         metrics.si_rmse(ia, ib, ma)))
    else:
        a = load_hdr(a_path)
        b = load_hdr(b_path)
        mask = load_mask(cfg["mask"]) if cfg.get("mask") else None
        rows.append((cfg.get("label", "image"), "direct",
                     metrics.angular_error(a, b, mask),
                     metrics.si_rmse(a, b, mask)))
    csv_path = os.path.join(out_dir, "eval.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["name", "material", "angular_error", "si_rmse"])
        for name, kind, ang, si in rows:
            w.writerow([name, kind, f"{ang:.6f}", f"{si:.6f}"])
    for name, kind, ang, si in rows:
        print(f"{name},{kind},{ang:.6f},{si:.6f}")
    cfgmod.write_manifest(out_dir, "eval", cfg)
    return 0


def cmd_confidence(cfg: dict) -> int:
    fit_cfg, model, cam = _scene_common(cfg)
    pose = cfgmod.load_pose(cfgmod._require(cfg, "pose"))
    res = int(cfg.get("res", fit_cfg.env_height))
    spp = int(cfg.get("spp", 16))
    seed = int(cfg.get("seed", 0))
    out_dir = cfgmod.output_dir(cfg)
    conf = confidence_map(model, pose, cam, res=res, spp=spp, seed=seed)
    conf3 = np.repeat(conf.values[:, :, None], 3, axis=2)
    save_hdr(os.path.join(out_dir, "confidence.pfm"), HdrImage(conf3))
    cfgmod.write_manifest(out_dir, "confidence", cfg)
    return 0


_COMMANDS = {
    "render": cmd_render,
    "estimate": cmd_estimate,
    "reconstruct": cmd_reconstruct,
    "relight": cmd_relight,
    "eval": cmd_eval,
    "confidence": cmd_confidence,
}


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alprobe",
                                description="shiny-object lighting and material recovery")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--output", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--spp", type=int)

    sp = sub.add_parser("render", help="forward render a posed scene")
    common(sp)
    sp.add_argument("--mesh")
    sp.add_argument("--env")
    sp.add_argument("--pose")

    sp = sub.add_parser("estimate", help="recover lighting and pose from one image")
    common(sp)
    sp.add_argument("--mesh")
    sp.add_argument("--reference")
    sp.add_argument("--mask")
    sp.add_argument("--init-pose", dest="init_pose")
    sp.add_argument("--freeze-pose", dest="freeze_pose", action="store_const",
                    const=True)

    sp = sub.add_parser("reconstruct", help="fit material textures from posed views")
    common(sp)
    sp.add_argument("--mesh")
    sp.add_argument("--init-pose", dest="init_pose")

    sp = sub.add_parser("relight", help="render a probe sphere under an environment")
    common(sp)
    sp.add_argument("--env")
    sp.add_argument("--material", choices=["mirror", "shiny", "diffuse"])
    sp.add_argument("--res", type=int)

    sp = sub.add_parser("eval", help="compare two images or environment maps")
    common(sp)
    sp.add_argument("eval_a", nargs="?", default=None)
    sp.add_argument("eval_b", nargs="?", default=None)
    sp.add_argument("--mask")
    sp.add_argument("--probes", action="store_const", const=True)
    sp.add_argument("--label")
    sp.add_argument("--res", type=int)

    sp = sub.add_parser("confidence", help="lighting-direction coverage of a posed object")
    common(sp)
    sp.add_argument("--mesh")
    sp.add_argument("--pose")
    sp.add_argument("--env")
    sp.add_argument("--res", type=int)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    cfg_path = args.pop("config", None)
    try:
        file_cfg = cfgmod.load_config_file(cfg_path) if cfg_path else {}
        merged = cfgmod.merge_config(file_cfg, args)
        merged.pop("_command", None)
        merged.pop("_version", None)
        return _COMMANDS[command](merged)
    except ConfigError as e:
        print(f"error: ConfigError: {e}", file=sys.stderr)
        return 2
    except AlprobeError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
