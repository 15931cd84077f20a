"""Command-line surface and file codecs."""

from .maskio import load_mask, save_mask
from .pfm import load_hdr, save_hdr

__all__ = ["load_hdr", "save_hdr", "load_mask", "save_mask"]
