"""Pinhole camera.

Conventions (fixed package-wide): right-handed, y-up world; the camera frame
has x right, y up and looks down its own -z axis.  Pixel (row i, col j) spans
the unit square with center at continuous coordinates (j + 0.5, i + 0.5);
image row 0 is the top of the frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import BehindCamera, InvalidResolution
from . import quaternion as quat

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class PinholeCamera:
    focal: float
    cx: float
    cy: float
    width: int
    height: int
    # camera-from-world rigid transform: x_cam = R * x_world + t
    rotation: np.ndarray = field(default_factory=quat.identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not self.focal > 0:
            raise ValueError(f"focal must be positive, got {self.focal}")
        if self.width < 1 or self.height < 1:
            raise InvalidResolution("image dimensions must be >= 1")
        object.__setattr__(self, "rotation", quat.normalize(self.rotation))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64)
        )

    @classmethod
    def look_at(
        cls,
        eye: np.ndarray,
        target: np.ndarray,
        focal: float,
        width: int,
        height: int,
        up: np.ndarray = (0.0, 1.0, 0.0),
    ) -> "PinholeCamera":
        """Camera at ``eye`` looking toward ``target``."""
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        right = right / np.linalg.norm(right)
        up_v = np.cross(right, fwd)
        # world-from-camera columns: x=right, y=up, z=-forward
        r_wc = np.stack([right, up_v, -fwd], axis=1)
        q = _matrix_to_quat(r_wc.T)
        return cls(
            focal=focal,
            cx=width / 2.0,
            cy=height / 2.0,
            width=width,
            height=height,
            rotation=q,
            translation=-(r_wc.T @ eye),
        )

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -quat.rotate(quat.conjugate(self.rotation), self.translation)

    def world_to_camera(self, x: np.ndarray) -> np.ndarray:
        return quat.rotate(self.rotation, x) + self.translation

    def project(self, x_world: np.ndarray) -> tuple[float, float, float]:
        """Project a world point to (u, v, depth).  Raises BehindCamera."""
        xc = self.world_to_camera(np.asarray(x_world, dtype=np.float64))
        depth = -xc[2]
        if depth <= MIN_DEPTH:
            raise BehindCamera(f"depth {depth:.3g} <= {MIN_DEPTH}")
        u = self.cx + self.focal * xc[0] / depth
        v = self.cy - self.focal * xc[1] / depth
        return float(u), float(v), float(depth)

    def project_batch(self, x_world: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized projection; caller filters on returned depth."""
        xc = quat.rotate(self.rotation, x_world) + self.translation
        depth = -xc[:, 2]
        safe = np.where(np.abs(depth) > MIN_DEPTH, depth, np.inf)
        u = self.cx + self.focal * xc[:, 0] / safe
        v = self.cy - self.focal * xc[:, 1] / safe
        return u, v, depth

    def unproject(self, u: float, v: float, depth: float) -> np.ndarray:
        """Inverse of :meth:`project` for a given positive depth."""
        xc = np.array(
            [
                (u - self.cx) * depth / self.focal,
                -(v - self.cy) * depth / self.focal,
                -depth,
            ]
        )
        return quat.rotate(quat.conjugate(self.rotation), xc - self.translation)

    def pixel_rays(self) -> tuple[np.ndarray, np.ndarray]:
        """World-space rays through every pixel center.

        Returns (origin (3,), unit directions (H*W, 3)) in row-major pixel
        order.
        """
        jj, ii = np.meshgrid(np.arange(self.width), np.arange(self.height))
        u = jj.ravel() + 0.5
        v = ii.ravel() + 0.5
        d_cam = np.stack(
            [
                (u - self.cx) / self.focal,
                -(v - self.cy) / self.focal,
                -np.ones_like(u),
            ],
            axis=1,
        )
        d_world = quat.rotate(quat.conjugate(self.rotation), d_cam)
        d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
        return self.center, d_world


def _matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix -> quaternion (Shepperd's method)."""
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        return quat.normalize(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    i = int(np.argmax(np.diag(m)))
    if i == 0:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif i == 1:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return quat.normalize(q)
