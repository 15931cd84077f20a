"""Scene configuration: JSON loading, flag merging, validation, manifests.

Precedence is flag > config file > default.  Every command echoes its
fully-resolved configuration to ``run_manifest.json`` in the output
directory; re-running with that manifest as the config file reproduces the
outputs bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
import os

import numpy as np

from .. import __version__
from ..core import quaternion
from ..core.camera import PinholeCamera
from ..core.mesh import load_obj
from ..core.pose import PoseScale
from ..errors import AlprobeError, ConfigError
from ..fit import FitConfig
from ..render import AlpModel
from .pfm import load_hdr


def load_config_file(path) -> dict:
    if not os.path.exists(path):
        raise ConfigError("config", f"file not found: {path}")
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON in {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return data


def merge_config(file_cfg: dict, flags: dict) -> dict:
    """Overlay non-None flag values onto the config-file dict."""
    merged = dict(file_cfg)
    for key, val in flags.items():
        if val is not None:
            merged[key] = val
    return merged


def _require(cfg: dict, field: str):
    if field not in cfg or cfg[field] is None:
        raise ConfigError(field, "required field is missing")
    return cfg[field]


def _existing_path(cfg: dict, field: str) -> str:
    path = _require(cfg, field)
    if not isinstance(path, str) or not os.path.exists(path):
        raise ConfigError(field, f"file not found: {path}")
    return path


def load_camera(spec) -> PinholeCamera:
    if not isinstance(spec, dict):
        raise ConfigError("camera", "must be an object")
    try:
        width = int(spec["width"])
        height = int(spec["height"])
        focal = float(spec["focal"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("camera", f"bad intrinsics: {e}") from None
    cx = float(spec.get("cx", width / 2.0))
    cy = float(spec.get("cy", height / 2.0))
    try:
        if "eye" in spec:
            cam = PinholeCamera.look_at(
                eye=np.asarray(spec["eye"], dtype=np.float64),
                target=np.asarray(spec.get("target", [0, 0, 0]), dtype=np.float64),
                up=np.asarray(spec.get("up", [0, 1, 0]), dtype=np.float64),
                focal=focal, width=width, height=height)
            if "cx" in spec or "cy" in spec:
                cam = dataclasses.replace(cam, cx=cx, cy=cy)
            return cam
        rot = quaternion.normalize(
            np.asarray(spec.get("rotation_wxyz", [1, 0, 0, 0]), dtype=np.float64))
        trans = np.asarray(spec.get("translation", [0, 0, 0]), dtype=np.float64)
        return PinholeCamera(focal=focal, cx=cx, cy=cy, width=width,
                             height=height, rotation=rot, translation=trans)
    except AlprobeError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError("camera", str(e)) from None


def load_pose(spec) -> PoseScale:
    """Pose from an inline object or a JSON file path."""
    if isinstance(spec, str):
        if not os.path.exists(spec):
            raise ConfigError("pose", f"file not found: {spec}")
        with open(spec) as f:
            spec = json.load(f)
    if not isinstance(spec, dict):
        raise ConfigError("pose", "must be an object or a path")
    order = spec.get("order", "wxyz")
    if order != "wxyz":
        raise ConfigError("pose", f"unsupported quaternion order {order!r}")
    try:
        q = quaternion.normalize(np.asarray(spec["quaternion"], dtype=np.float64))
        t = np.asarray(spec["translation"], dtype=np.float64)
        s = float(spec.get("scale", 1.0))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("pose", f"bad pose: {e}") from None
    if t.shape != (3,):
        raise ConfigError("pose", f"translation must have 3 entries, got {t.shape}")
    if s <= 0:
        raise ConfigError("pose", "scale must be > 0")
    return PoseScale(rotation=q, translation=t, scale=s)


def save_pose(path, pose: PoseScale) -> None:
    doc = {
        "order": "wxyz",
        "quaternion": [float(x) for x in pose.rotation],
        "translation": [float(x) for x in pose.translation],
        "scale": float(pose.scale),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def _texture3(cfg: dict, field: str, tex_res: int):
    """Albedo-style texture: PFM path or constant RGB."""
    val = cfg.get(field)
    if val is None:
        return None
    if isinstance(val, str):
        if not os.path.exists(val):
            raise ConfigError(field, f"file not found: {val}")
        return load_hdr(val).pixels
    arr = np.asarray(val, dtype=np.float64)
    if arr.shape != (3,):
        raise ConfigError(field, "constant must be [r, g, b]")
    return np.broadcast_to(arr, (tex_res, tex_res, 3)).copy()


def _texture1(cfg: dict, field: str, tex_res: int):
    """Scalar texture: PFM path (channel 0) or constant."""
    val = cfg.get(field)
    if val is None:
        return None
    if isinstance(val, str):
        if not os.path.exists(val):
            raise ConfigError(field, f"file not found: {val}")
        return load_hdr(val).pixels[..., 0]
    try:
        c = float(val)
    except (TypeError, ValueError):
        raise ConfigError(field, "must be a number or a PFM path") from None
    return np.full((tex_res, tex_res), c)


def load_model(cfg: dict, fit_cfg: FitConfig) -> AlpModel:
    mesh_path = _existing_path(cfg, "mesh")
    mesh = load_obj(mesh_path)
    res = fit_cfg.tex_res
    alb = _texture3(cfg, "albedo", res)
    rough = _texture1(cfg, "roughness", res)
    vis = _texture1(cfg, "visibility", res)
    if alb is None:
        alb = np.full((res, res, 3), 0.8)
    if rough is None:
        rough = np.full((res, res), 0.2)
    if vis is None:
        vis = np.ones((res, res))
    q_ref = quaternion.identity()
    if "q_ref" in cfg:
        q_ref = quaternion.normalize(np.asarray(cfg["q_ref"], dtype=np.float64))
    try:
        return AlpModel(mesh=mesh, albedo=alb, roughness=rough,
                        visibility=vis, q_ref=q_ref)
    except AlprobeError:
        raise
    except ValueError as e:
        raise ConfigError("material", str(e)) from None


_FIT_FIELDS = {f.name for f in dataclasses.fields(FitConfig)}


def load_fit_config(cfg: dict) -> FitConfig:
    block = cfg.get("fit", {})
    if not isinstance(block, dict):
        raise ConfigError("fit", "must be an object")
    unknown = set(block) - _FIT_FIELDS
    if unknown:
        raise ConfigError("fit", f"unknown fields: {sorted(unknown)}")
    kwargs = dict(block)
    if "orientation_starts" in kwargs and kwargs["orientation_starts"] is not None:
        kwargs["orientation_starts"] = [
            quaternion.normalize(np.asarray(q, dtype=np.float64))
            for q in kwargs["orientation_starts"]
        ]
    try:
        return FitConfig(**kwargs)
    except TypeError as e:
        raise ConfigError("fit", str(e)) from None


def output_dir(cfg: dict) -> str:
    out = cfg.get("output", ".")
    os.makedirs(out, exist_ok=True)
    return out


def write_manifest(out_dir: str, command: str, merged_cfg: dict) -> str:
    """Resolved-config echo; loading it back as --config reproduces the run."""
    doc = dict(merged_cfg)
    doc["_command"] = command
    doc["_version"] = __version__
    path = os.path.join(out_dir, "run_manifest.json")
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, default=_jsonify)
        f.write("\n")
    return path


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")
