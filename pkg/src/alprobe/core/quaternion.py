"""Unit-quaternion rotations, stored as ``[w, x, y, z]`` float64 arrays.

All functions are pure and accept/return plain numpy arrays.  ``q`` and ``-q``
encode the same rotation; distance helpers canonicalize the sign so the double
cover never penalizes an identical orientation.
"""

from __future__ import annotations

import numpy as np

UNIT_TOL = 1e-6


def identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize zero quaternion")
    return q / n


def multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product ``q1 * q2`` (apply q2 first, then q1)."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def to_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix of a (defensively normalized) quaternion."""
    w, x, y, z = normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate one vector or a batch ``(N, 3)`` by ``q``."""
    v = np.asarray(v, dtype=np.float64)
    return v @ to_matrix(q).T if v.ndim > 1 else to_matrix(q) @ v


def from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def from_tangent(delta: np.ndarray) -> np.ndarray:
    """Exponential map from a 3-vector tangent (axis * angle) to a quaternion.

    Small angles use the series expansion so the map stays smooth through
    ``delta == 0``; this is the retraction used by the pose optimizer and by
    finite-difference probes, so both must share it.
    """
    delta = np.asarray(delta, dtype=np.float64)
    angle = np.linalg.norm(delta)
    half = 0.5 * angle
    if angle < 1e-12:
        s = 0.5 - angle * angle / 48.0
    else:
        s = np.sin(half) / angle
    return np.concatenate([[np.cos(half)], s * delta])


def canonical(q: np.ndarray, reference: np.ndarray | None = None) -> np.ndarray:
    """Flip sign so ``dot(q, reference) >= 0`` (reference defaults to w>=0)."""
    q = np.asarray(q, dtype=np.float64)
    if reference is None:
        return -q if q[0] < 0 else q.copy()
    return -q if float(np.dot(q, reference)) < 0 else q.copy()


def distance_sq(q: np.ndarray, q_ref: np.ndarray) -> float:
    """min(||q - q_ref||^2, ||q + q_ref||^2): double-cover-aware distance."""
    q = np.asarray(q, dtype=np.float64)
    q_ref = np.asarray(q_ref, dtype=np.float64)
    return float(min(np.sum((q - q_ref) ** 2), np.sum((q + q_ref) ** 2)))


def angle_between(q1: np.ndarray, q2: np.ndarray) -> float:
    """Geodesic rotation angle in radians between two unit quaternions."""
    d = abs(float(np.dot(normalize(q1), normalize(q2))))
    return 2.0 * np.arccos(min(1.0, d))
