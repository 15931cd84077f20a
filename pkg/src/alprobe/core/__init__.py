"""Geometry, camera, pose and image primitives."""

from . import quaternion
from .camera import PinholeCamera
from .image import HdrImage, MaskImage, check_same_shape, mask_barycenter
from .mesh import (
    TriMesh,
    load_obj,
    make_cylinder,
    make_quad,
    make_uv_sphere,
    save_obj,
)
from .pose import PoseScale

__all__ = [
    "HdrImage",
    "MaskImage",
    "PinholeCamera",
    "PoseScale",
    "TriMesh",
    "check_same_shape",
    "load_obj",
    "make_cylinder",
    "make_quad",
    "make_uv_sphere",
    "mask_barycenter",
    "quaternion",
    "save_obj",
]
