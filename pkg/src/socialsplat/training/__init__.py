"""Losses, metrics, datasets, checkpoints and the staged training loops."""
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, RunConfig, StageConfig
from .dataset import Clip, Dataset, FrameRef, load_manifest, write_dataset
from .losses import LossWeights, dssim, l1_loss, l_image, l_joint, l_mesh, l_offset, l_pos, ssim
from .metrics import (
    SingularCovarianceWarning,
    frechet_from_stats,
    metric_fd,
    metric_l1,
    metric_mse,
    metric_pfd,
    metric_psnr,
    metric_ssim,
)
from .stages import (
    Avatar,
    eval_mesh_loss,
    load_stage_checkpoint,
    new_avatar,
    read_loss_log,
    run_stage1,
    run_stage2,
    run_stage3,
    save_stage_checkpoint,
    write_loss_log,
)

__all__ = [
    "Avatar", "Clip", "Dataset", "FrameRef", "LossWeights", "ModelConfig", "RunConfig",
    "SingularCovarianceWarning", "StageConfig", "dssim", "eval_mesh_loss", "frechet_from_stats",
    "l1_loss", "l_image", "l_joint", "l_mesh", "l_offset", "l_pos", "load_checkpoint",
    "load_manifest", "load_stage_checkpoint", "metric_fd", "metric_l1", "metric_mse", "metric_pfd",
    "metric_psnr", "metric_ssim", "new_avatar", "read_loss_log", "run_stage1", "run_stage2",
    "run_stage3", "save_checkpoint", "save_stage_checkpoint", "ssim", "write_loss_log",
]
