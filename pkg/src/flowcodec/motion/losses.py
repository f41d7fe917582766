"""Flow-supervision objectives."""

from __future__ import annotations

from ..grad import Tensor, ops
from .flownet import warp

DEFAULT_LAMBDA_ME = 100.0


def _check(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: dimension mismatch {a.shape} vs {b.shape}")


def epe(flow, label) -> Tensor:
    """Mean Euclidean end-point distance between two (2, H, W) flows."""
    flow, label = ops.as_tensor(flow), ops.as_tensor(label)
    _check("epe", flow, label)
    if flow.data.ndim != 3 or flow.shape[0] != 2:
        raise ValueError(f"epe: flows must be (2, H, W), got {flow.shape}")
    d = flow - label
    sq = ops.square(d)
    dist = ops.sqrt(ops.channel_slice(sq, 0, 1) + ops.channel_slice(sq, 1, 2))
    return ops.mean(dist)


def mse(a, b) -> Tensor:
    a, b = ops.as_tensor(a), ops.as_tensor(b)
    _check("mse", a, b)
    return ops.mean(ops.square(a - b))


def me_loss(current, reference, flow, label, lambda_me: float = DEFAULT_LAMBDA_ME) -> Tensor:
    """EPE against the label plus ``lambda_me`` times the warp-prediction MSE."""
    return epe(flow, label) + mse(current, warp(reference, flow)) * lambda_me
