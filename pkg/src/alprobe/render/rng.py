"""Counter-based RNG for per-pixel sample streams.

Every uniform draw is a pure function of (seed, pixel index, sample index,
dimension), so results never depend on scheduling or thread count.  The
mixer is the 64-bit finalizer from MurmurHash3; the compiled kernels
implement the identical bit sequence.
"""

from __future__ import annotations

import numpy as np

_C1 = np.uint64(0xFF51AFD7ED558CCD)
_C2 = np.uint64(0xC4CEB9FE1A85EC53)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_PIXEL_SALT = np.uint64(0xBF58476D1CE4E5B9)
_SAMPLE_SALT = np.uint64(0x94D049BB133111EB)
_SHIFT = np.uint64(33)
_INV53 = float(2.0 ** -53)
_MASK64 = (1 << 64) - 1


def mix64(z: np.ndarray) -> np.ndarray:
    # uint64 wraparound is intended; errstate silences scalar overflow warnings
    with np.errstate(over="ignore"):
        z = z ^ (z >> _SHIFT)
        z = z * _C1
        z = z ^ (z >> _SHIFT)
        z = z * _C2
        return z ^ (z >> _SHIFT)


def sample_uniform(seed: int, pid, k, dim: int) -> np.ndarray:
    """u01 draw for pixel ``pid``, sample ``k``, dimension ``dim`` (0 or 1)."""
    pid = np.asarray(pid, dtype=np.uint64)
    k = np.asarray(k, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = mix64(np.uint64(seed & _MASK64) + _GOLDEN)
        h = mix64(h ^ (pid + _PIXEL_SALT))
        h = mix64(h ^ (k * np.uint64(2) + np.uint64(dim) + _SAMPLE_SALT))
    return (h >> np.uint64(11)).astype(np.float64) * _INV53


def derive_seed(seed: int, index: int) -> int:
    """Child seed for step ``index``; stable across platforms."""
    with np.errstate(over="ignore"):
        h = mix64(np.uint64(seed & _MASK64) + _GOLDEN)
        h = mix64(h ^ (np.uint64(index & _MASK64) + _PIXEL_SALT))
    return int(h)
