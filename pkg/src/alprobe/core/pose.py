"""Rigid pose with isotropic scale: ``x_world = scale * R(q) * x_obj + t``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quaternion as quat


@dataclass(frozen=True)
class PoseScale:
    """Object placement: unit rotation quaternion, translation, scale > 0."""

    rotation: np.ndarray = field(default_factory=quat.identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", quat.normalize(self.rotation))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64)
        )
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def transform_point(self, x: np.ndarray) -> np.ndarray:
        """Apply ``scale * R * x + t`` to one point or an ``(N, 3)`` batch."""
        return self.scale * quat.rotate(self.rotation, x) + self.translation

    def rotate_direction(self, d: np.ndarray) -> np.ndarray:
        """Rotate a direction (scale and translation do not apply)."""
        return quat.rotate(self.rotation, d)

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix equivalent."""
        m = np.eye(4)
        m[:3, :3] = self.scale * quat.to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def perturbed(
        self,
        d_translation: np.ndarray | None = None,
        d_rotation: np.ndarray | None = None,
        d_log_scale: float = 0.0,
    ) -> "PoseScale":
        """Retraction used by the optimizer and finite-difference probes.

        The rotation tangent applies on the world side:
        ``R_new = exp(d_rotation) * R``.
        """
        q = self.rotation
        if d_rotation is not None:
            q = quat.normalize(quat.multiply(quat.from_tangent(d_rotation), q))
        t = self.translation
        if d_translation is not None:
            t = t + np.asarray(d_translation, dtype=np.float64)
        return PoseScale(q, t, self.scale * float(np.exp(d_log_scale)))
