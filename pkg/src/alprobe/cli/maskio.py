"""Coverage-mask I/O as 8-bit grayscale PNG."""

from __future__ import annotations

import numpy as np
from PIL import Image

from ..core.image import MaskImage
from ..errors import UnsupportedBitDepth


def load_mask(path) -> MaskImage:
    img = Image.open(path)
    if img.mode != "L":
        raise UnsupportedBitDepth(
            f"{path}: mask must be 8-bit grayscale PNG, got mode {img.mode!r}")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return MaskImage(arr)


def save_mask(path, mask: MaskImage) -> None:
    vals = mask.values if isinstance(mask, MaskImage) else np.asarray(mask)
    q = np.clip(np.round(vals * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path, format="PNG")
