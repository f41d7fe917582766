"""Minimal reverse-mode differentiation over dense float64 arrays."""

from . import ops
from .check import GradCheckReport, check_gradients
from .tape import Tape, Tensor, backward, no_grad, tapes_created

__all__ = ["GradCheckReport", "Tape", "Tensor", "backward", "check_gradients", "no_grad", "ops", "tapes_created"]
