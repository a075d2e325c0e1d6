"""Mask-aligned inpainting augmentation for segmentation (toy-scale reimplementation)."""

from ._core import (
    ContractError,
    ParameterError,
    PathopaintError,
    ShapeError,
    StageError,
    audit,
    check_config,
    compute_uncertain,
    derive_seed,
    downsample_mask,
    foreground_iou,
    forward_diffuse,
    kmeans,
    make_noise_schedule,
    mask_pool,
    non_reproducibility_caveat,
    preset_config,
    report_text,
    run_pipeline,
    seg_loss,
    summarize_iou,
)

__all__ = [
    "ContractError",
    "ParameterError",
    "PathopaintError",
    "ShapeError",
    "StageError",
    "audit",
    "check_config",
    "compute_uncertain",
    "derive_seed",
    "downsample_mask",
    "foreground_iou",
    "forward_diffuse",
    "kmeans",
    "make_noise_schedule",
    "mask_pool",
    "non_reproducibility_caveat",
    "preset_config",
    "report_text",
    "run_pipeline",
    "seg_loss",
    "summarize_iou",
]
