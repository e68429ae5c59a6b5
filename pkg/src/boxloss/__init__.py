"""Bounding-box localization losses with analytic gradients and experiment tooling.

Provides axis-aligned box geometry, four localization losses (Huber,
squared, IoU, and the dynamically blended smooth IoU), exact gradients with
a finite-difference verification harness, one-dimensional loss-profile
sweeps, and a synthetic gradient-descent fitting harness. The same
functionality is exposed through the ``boxloss`` command line tool.
"""

from .boxes import (
    Box,
    BoxBatch,
    BoxYXHW,
    area,
    intersection_dims,
    iou,
    iou_pixel_oracle,
    to_yxhw,
    transform,
)
from .fitting import (
    ComparisonResult,
    ComparisonRow,
    FitConfig,
    FitResult,
    InfeasibleDatasetError,
    OptimizerKind,
    OverlapRegime,
    compare_losses,
    fit,
    generate_dataset,
)
from .gradients import (
    REGIMES,
    GradCheckConfig,
    GradCheckResult,
    GradVector,
    finite_diff_check,
    grad_huber,
    grad_iou_loss,
    grad_smooth_iou,
    grad_squared,
)
from .losses import (
    HuberParams,
    LossKind,
    LossReport,
    huber_box,
    huber_scalar,
    iou_loss,
    loss_batch,
    smooth_iou_batch,
    squared_box,
)
from .profiles import (
    DEFAULT_DELTAS,
    SweepConfig,
    SweepRow,
    convexity_violations,
    delta_study,
    sweep,
    sweep_mismatch,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "BoxBatch",
    "BoxYXHW",
    "area",
    "intersection_dims",
    "iou",
    "iou_pixel_oracle",
    "to_yxhw",
    "transform",
    "HuberParams",
    "LossKind",
    "LossReport",
    "huber_box",
    "huber_scalar",
    "iou_loss",
    "loss_batch",
    "smooth_iou_batch",
    "squared_box",
    "REGIMES",
    "GradCheckConfig",
    "GradCheckResult",
    "GradVector",
    "finite_diff_check",
    "grad_huber",
    "grad_iou_loss",
    "grad_smooth_iou",
    "grad_squared",
    "DEFAULT_DELTAS",
    "SweepConfig",
    "SweepRow",
    "convexity_violations",
    "delta_study",
    "sweep",
    "sweep_mismatch",
    "ComparisonResult",
    "ComparisonRow",
    "FitConfig",
    "FitResult",
    "InfeasibleDatasetError",
    "OptimizerKind",
    "OverlapRegime",
    "compare_losses",
    "fit",
    "generate_dataset",
    "__version__",
]
