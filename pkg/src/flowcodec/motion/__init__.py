"""Pyramid flow estimation, warping, and offline MV-label supervision."""

from .finetune import FinetuneConfig, evaluate_flow, finetune_flow
from .flownet import estimate_flow, init_flow_params, warp
from .labels import MVLabelGrid, densify_labels, read_mv_labels, write_mv_labels
from .losses import DEFAULT_LAMBDA_ME, epe, me_loss, mse

__all__ = [
    "DEFAULT_LAMBDA_ME", "FinetuneConfig", "MVLabelGrid", "densify_labels", "epe", "estimate_flow",
    "evaluate_flow", "finetune_flow", "init_flow_params", "me_loss", "mse", "read_mv_labels", "warp",
    "write_mv_labels",
]
