"""Linear-radiance HDR images and soft coverage masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, EmptyMask


@dataclass
class HdrImage:
    """Row-major linear-RGB radiance, non-negative and finite."""

    pixels: np.ndarray  # (H, W, 3) float64

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3), got {self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("non-finite radiance values")
        if np.any(self.pixels < 0):
            raise ValueError("negative radiance values")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def zeros(cls, width: int, height: int) -> "HdrImage":
        return cls(np.zeros((height, width, 3)))


@dataclass
class MaskImage:
    """Soft coverage in [0, 1] per pixel."""

    values: np.ndarray  # (H, W) float64

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"expected (H, W), got {self.values.shape}")
        self.values = np.clip(self.values, 0.0, 1.0)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def is_empty(self) -> bool:
        return not np.any(self.values > 0)


def check_same_shape(a, b) -> None:
    sa = a.pixels.shape[:2] if isinstance(a, HdrImage) else a.values.shape
    sb = b.pixels.shape[:2] if isinstance(b, HdrImage) else b.values.shape
    if sa != sb:
        raise DimensionMismatch(f"image shapes differ: {sa} vs {sb}")


def mask_barycenter(mask) -> tuple[float, float]:
    """Coverage-weighted mean pixel coordinate (u=column, v=row).

    Accepts a MaskImage or a plain (H, W) array.  Pixel (row i, col j)
    contributes at integer coordinates (j, i).
    """
    vals = mask.values if isinstance(mask, MaskImage) else np.asarray(mask, dtype=np.float64)
    total = vals.sum()
    if total <= 0:
        raise EmptyMask("mask has zero total coverage")
    ii, jj = np.nonzero(vals > 0)
    w = vals[ii, jj]
    return float((jj * w).sum() / total), float((ii * w).sum() / total)
