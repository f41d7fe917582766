"""Entropy coding of one frame's rounded latents, and the matching decoder.

Both sides derive the tables in the same order: the z model from the
checkpoint, y's Gaussian from the decoded hyperprior, and g's Gaussian from
the temporal prior on the context built from the decoded flow.
"""

from __future__ import annotations

import numpy as np

from ..codec.model import (
    architecture,
    context_decode,
    decode_mv,
    extract_context,
    hyper_decode,
    temporal_prior,
    z_model,
)
from ..grad import Tensor, no_grad
from .cdf import build_cdfs
from .container import INTER, INTRA, FrameRecord
from .rangecoder import range_decode, range_encode


def _code(values: np.ndarray, mean: Tensor, scale: Tensor) -> bytes:
    table = build_cdfs(mean.data, scale.data)
    return range_encode(values.reshape(-1).astype(np.int64), table)


def _uncode(data: bytes, mean: Tensor, scale: Tensor) -> np.ndarray:
    table = build_cdfs(mean.data, scale.data)
    return range_decode(data, table, table.contexts).astype(np.float64).reshape(mean.shape)


def latent_shapes(params, height: int, width: int):
    a = architecture(params)
    return (a.c_y, height // 8, width // 8), (a.c_z, height // 32, width // 32)


def encode_inter_frame(y_hat, z_hat, g_hat, params, reference) -> FrameRecord:
    """Range-code rounded (y, z, g) for a P-frame coded against ``reference``."""
    y_hat, z_hat, g_hat = (np.asarray(getattr(t, "data", t), dtype=np.float64) for t in (y_hat, z_hat, g_hat))
    for name, v in (("y", y_hat), ("z", z_hat), ("g", g_hat)):
        if np.any(v != np.round(v)):
            raise ValueError(f"encode_inter_frame: {name} must hold rounded integers")
    with no_grad():
        z_mean, z_scale = z_model(params, z_hat.shape)
        y_mean, y_scale = hyper_decode(params, z_hat)
        context = extract_context(reference, decode_mv(params, y_hat), params)
        g_mean, g_scale = temporal_prior(params, context)
    return FrameRecord(
        INTER,
        z=_code(z_hat, z_mean, z_scale),
        y=_code(y_hat, y_mean, y_scale),
        g=_code(g_hat, g_mean, g_scale),
    )


def decode_inter_frame(record: FrameRecord, params, reference) -> np.ndarray:
    """Reconstruct a P-frame from its payloads, the checkpoint and the previous reconstruction."""
    if record.kind != INTER:
        raise ValueError("decode_inter_frame: record is not an inter frame")
    reference = np.asarray(reference, dtype=np.float64)
    _, h, w = reference.shape
    y_shape, z_shape = latent_shapes(params, h, w)
    with no_grad():
        z_mean, z_scale = z_model(params, z_shape)
        z_hat = _uncode(record.z, z_mean, z_scale)
        y_mean, y_scale = hyper_decode(params, z_hat)
        y_hat = _uncode(record.y, y_mean, y_scale)
        context = extract_context(reference, decode_mv(params, y_hat), params)
        g_mean, g_scale = temporal_prior(params, context)
        g_hat = _uncode(record.g, g_mean, g_scale)
        return context_decode(params, g_hat, context).data


def intra_payload(frame) -> tuple[bytes, np.ndarray]:
    """8-bit raw planes and the reconstruction they decode to."""
    q = np.clip(np.floor(np.asarray(frame, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)
    return q.tobytes(), q.astype(np.float64) / 255.0


def decode_intra_frame(record: FrameRecord, shape) -> np.ndarray:
    if record.kind != INTRA:
        raise ValueError("decode_intra_frame: record is not an intra frame")
    expected = int(np.prod(shape))
    if len(record.intra) != expected:
        raise ValueError(f"intra payload has {len(record.intra)} bytes, expected {expected} for {tuple(shape)}")
    return np.frombuffer(record.intra, dtype=np.uint8).reshape(shape).astype(np.float64) / 255.0
