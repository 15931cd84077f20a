"""Minimal PFM (portable float map) codec for HDR images.

Layout: ASCII header of three tokens -- "PF", "width height", "scale" --
then width*height*3 float32s in bottom-up row order.  A negative scale
marks little-endian payload, positive big-endian.  Values are stored as
float32, so save/load round trips are bit-exact for float32-representable
data.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..core.image import HdrImage
from ..errors import MalformedHeader, TruncatedPayload


def _read_token(f) -> bytes:
    """One whitespace-delimited header token."""
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise MalformedHeader("unexpected end of file in header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def load_hdr(path) -> HdrImage:
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic != b"PF":
            raise MalformedHeader(f"expected 'PF' magic, got {magic!r}")
        try:
            width = int(_read_token(f))
            height = int(_read_token(f))
        except ValueError as e:
            raise MalformedHeader(f"bad dimensions: {e}") from None
        if width < 1 or height < 1:
            raise MalformedHeader(f"bad dimensions {width}x{height}")
        try:
            scale = float(_read_token(f))
        except ValueError as e:
            raise MalformedHeader(f"bad scale: {e}") from None
        if scale == 0.0:
            raise MalformedHeader("scale must be nonzero")

        count = width * height * 3
        payload = f.read(count * 4)
        if len(payload) < count * 4:
            raise TruncatedPayload(
                f"expected {count * 4} payload bytes, got {len(payload)}")
        dt = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
        data = np.frombuffer(payload, dtype=dt, count=count).astype(np.float64)

    img = data.reshape(height, width, 3)[::-1]  # file rows run bottom-up
    if abs(scale) != 1.0:
        img = img * abs(scale)
    if np.any(img < 0):
        warnings.warn(f"{path}: negative channel values clamped to 0",
                      stacklevel=2)
        img = np.maximum(img, 0.0)
    if not np.all(np.isfinite(img)):
        raise TruncatedPayload(f"{path}: non-finite values in payload")
    return HdrImage(np.ascontiguousarray(img))


def save_hdr(path, image: HdrImage) -> None:
    px = image.pixels if isinstance(image, HdrImage) else np.asarray(image)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {px.shape}")
    h, w = px.shape[:2]
    with open(path, "wb") as f:
        f.write(b"PF\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")  # little-endian
        f.write(px[::-1].astype("<f4").tobytes())
