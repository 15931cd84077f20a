"""Inverse-rendering loops: losses, optimizer, lighting and material fits."""

from .estimate import (FitConfig, FitResult, default_orientation_starts,
                       estimate_lighting, initial_pose_from_mask,
                       masked_log_psnr)
from .losses import (chamfer_distance, decay_factor, mask_loss, pose_reg,
                     rgb_loss, total_loss)
from .optim import Adam
from .reconstruct import Capture, ReconResult, reconstruct_alp, texel_view_counts

__all__ = [
    "Adam", "Capture", "FitConfig", "FitResult", "ReconResult",
    "chamfer_distance", "decay_factor", "default_orientation_starts",
    "estimate_lighting", "initial_pose_from_mask", "mask_loss",
    "masked_log_psnr", "pose_reg", "reconstruct_alp", "rgb_loss",
    "texel_view_counts", "total_loss",
]
