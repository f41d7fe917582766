"""Encode-time motion-latent refinement and sequence coding."""

from .optimizer import (
    DEFAULT_WEIGHTS,
    OptConfig,
    OptResult,
    WindowConfig,
    lr_schedule,
    optimize_single_frame,
    optimize_window,
    optimizer_iterations,
    window_loss,
    window_schedule,
)
from .sequence import LOG_FIELDS, MODES, FrameReport, GopConfig, decode_sequence, encode_sequence

__all__ = [
    "DEFAULT_WEIGHTS", "FrameReport", "GopConfig", "LOG_FIELDS", "MODES", "OptConfig", "OptResult", "WindowConfig",
    "decode_sequence", "encode_sequence", "lr_schedule", "optimize_single_frame", "optimize_window",
    "optimizer_iterations", "window_loss", "window_schedule",
]
