"""Tone-mapped inspection composites.  Stored data stays linear; these
8-bit previews are display-only."""

from __future__ import annotations

import numpy as np
from PIL import Image

from ..core.image import HdrImage


def reinhard(px: np.ndarray) -> np.ndarray:
    """Fixed x/(1+x) operator followed by gamma 2.2, to [0, 1]."""
    mapped = px / (1.0 + px)
    return np.clip(mapped, 0.0, 1.0) ** (1.0 / 2.2)


def side_by_side(path, left: HdrImage, right: HdrImage, gap: int = 2) -> None:
    """Write a reference|render composite PNG with a white divider."""
    lp = left.pixels if isinstance(left, HdrImage) else np.asarray(left)
    rp = right.pixels if isinstance(right, HdrImage) else np.asarray(right)
    h = max(lp.shape[0], rp.shape[0])

    def pad(p):
        if p.shape[0] < h:
            p = np.pad(p, ((0, h - p.shape[0]), (0, 0), (0, 0)))
        return p

    lp, rp = pad(lp), pad(rp)
    divider = np.ones((h, gap, 3))
    strip = np.concatenate([reinhard(lp), divider, reinhard(rp)], axis=1)
    q = (strip * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q, mode="RGB").save(path, format="PNG")
