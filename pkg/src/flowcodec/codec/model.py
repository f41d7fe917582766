"""Toy conditional video codec: motion autoencoder with hyperprior, context
extraction, contextual coding and the noise/round decode passes.

Latents are (C, H/8, W/8) for the motion feature ``y``, (C, H/32, W/32) for
the motion hyperprior ``z`` and (C, H/8, W/8) for the contextual latent ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..grad import Tensor, no_grad, ops
from ..motion.losses import mse

PREFIX = "codec"
SCALE_BOUND = 0.11
LATENT_MIN, LATENT_MAX = -64, 63
ROUND, NOISE = "round", "noise"


@dataclass(frozen=True)
class Architecture:
    channels: int = 1
    c_y: int = 32
    c_z: int = 16
    c_g: int = 48
    c_ctx: int = 32
    c_mid: int = 16  # width of the context refinement and decoder output stages


def _conv(rng, cout, cin, k):
    return rng.normal(scale=np.sqrt(2.0 / (cin * k * k)), size=(cout, cin, k, k))


def _convt(rng, cin, cout, k):
    # stride-2 transpose: each output sees ~cin*k*k/4 taps
    return rng.normal(scale=np.sqrt(2.0 / (cin * k * k / 4.0)), size=(cin, cout, k, k))


def init_codec_params(arch: Architecture = Architecture(), seed: int = 0) -> dict[str, np.ndarray]:
    """Fresh codec parameters under the ``codec.`` namespace."""
    rng = np.random.default_rng(seed)
    a = arch
    p: dict[str, np.ndarray] = {}

    def conv(name, cout, cin, k, gain=1.0):
        p[f"{PREFIX}.{name}.w"] = _conv(rng, cout, cin, k) * gain
        p[f"{PREFIX}.{name}.b"] = np.zeros(cout)

    def convt(name, cin, cout, k, gain=1.0):
        p[f"{PREFIX}.{name}.w"] = _convt(rng, cin, cout, k) * gain
        p[f"{PREFIX}.{name}.b"] = np.zeros(cout)

    # motion autoencoder + hyperprior
    conv("mv_enc0", a.c_y, 2, 5)
    conv("mv_enc1", a.c_y, a.c_y, 5)
    conv("mv_enc2", a.c_y, a.c_y, 5)
    conv("hyper_enc0", a.c_z, a.c_y, 5)
    conv("hyper_enc1", a.c_z, a.c_z, 5)
    convt("hyper_dec0", a.c_z, a.c_y, 3)
    convt("hyper_dec1", a.c_y, 2 * a.c_y, 3, gain=0.1)
    convt("mv_dec0", a.c_y, a.c_y, 3)
    convt("mv_dec1", a.c_y, a.c_y, 3)
    convt("mv_dec2", a.c_y, 2, 3, gain=0.1)
    # context extraction
    conv("ctx_feat", a.c_ctx - a.channels, a.channels, 3)
    conv("ctx_refine0", a.c_mid, a.c_ctx, 3)
    conv("ctx_refine1", a.c_ctx, a.c_mid, 3, gain=0.1)
    # contextual coding
    conv("ctx_enc0", a.c_g, a.channels + a.c_ctx, 5)
    conv("ctx_enc1", a.c_g, a.c_g, 5)
    conv("ctx_enc2", a.c_g, a.c_g, 5)
    conv("prior0", a.c_g, a.c_ctx, 3)
    conv("prior1", a.c_g, a.c_g, 3)
    conv("prior2", 2 * a.c_g, a.c_g, 3, gain=0.1)
    convt("ctx_dec0", a.c_g + a.c_ctx, a.c_g, 3)
    convt("ctx_dec1", a.c_g, a.c_g, 3)
    convt("ctx_dec2", a.c_g, a.c_mid, 3)
    conv("ctx_out", a.channels, a.c_mid + a.c_ctx, 3, gain=0.1)
    # factorized model for z
    p[f"{PREFIX}.zprior.loc"] = np.zeros(a.c_z)
    p[f"{PREFIX}.zprior.scale"] = np.full(a.c_z, np.log(np.expm1(1.0)))
    p[f"{PREFIX}.arch"] = np.array([a.channels, a.c_y, a.c_z, a.c_g, a.c_ctx, a.c_mid], dtype=np.float64)
    return p


def architecture(params) -> Architecture:
    raw = params[f"{PREFIX}.arch"]
    vals = [int(v) for v in np.asarray(getattr(raw, "data", raw))]
    return Architecture(*vals)


def trainable_codec_names(params) -> list[str]:
    return sorted(k for k in params if k.startswith(PREFIX + ".") and not k.endswith(".arch"))


def _c(params, name, x, stride=1):
    return ops.conv2d(x, params[f"{PREFIX}.{name}.w"], params[f"{PREFIX}.{name}.b"], stride=stride)


def _ct(params, name, x):
    return ops.conv_transpose2d(x, params[f"{PREFIX}.{name}.w"], params[f"{PREFIX}.{name}.b"])


def _lr(x):
    return ops.leaky_relu(x, 0.1)


# ---------------------------------------------------------------- latent containers


@dataclass
class LatentPair:
    """Motion feature ``y`` and hyperprior ``z`` plus their quantization state."""

    y: Tensor
    z: Tensor
    state: str = "raw"  # raw | rounded | noised


@dataclass
class ContextLatent:
    g: Tensor
    state: str = "raw"


class NoiseSource(Protocol):
    def uniform(self, low: float, high: float, size) -> np.ndarray: ...


class ZeroNoise:
    """Noise source that always returns zeros (forces Dec_T onto the raw latents)."""

    def uniform(self, low, high, size):
        return np.zeros(size)


def quantize_tensor(x, mode: str, rng: NoiseSource | None = None) -> Tensor:
    """Round (ties away from zero, clamped to the coder alphabet) or add U(-0.5, 0.5) noise."""
    x = ops.as_tensor(x)
    if mode == ROUND:
        r = ops.round_half_away(x)
        if np.any(r.data < LATENT_MIN) or np.any(r.data > LATENT_MAX):
            r = Tensor(np.clip(r.data, LATENT_MIN, LATENT_MAX))
        return r
    if mode == NOISE:
        if rng is None:
            raise ValueError("noise quantization needs a random generator")
        return ops.add_noise(x, rng.uniform(-0.5, 0.5, size=x.shape))
    raise ValueError(f"unknown quantization mode {mode!r}")


def quantize(latent: LatentPair | ContextLatent, mode: str, rng: NoiseSource | None = None):
    """Quantize a raw latent container; y is drawn before z."""
    if latent.state != "raw":
        raise ValueError(f"latent is already {latent.state}; quantize expects a raw latent")
    tag = "rounded" if mode == ROUND else "noised"
    if isinstance(latent, LatentPair):
        return LatentPair(quantize_tensor(latent.y, mode, rng), quantize_tensor(latent.z, mode, rng), tag)
    return ContextLatent(quantize_tensor(latent.g, mode, rng), tag)


# ---------------------------------------------------------------- entropy models


def bits_estimate(latent, mean, scale) -> Tensor:
    """Total bits of ``latent`` under per-element Gaussian interval masses."""
    return ops.sum(ops.gaussian_interval_bits(latent, mean, scale))


def z_model(params, shape) -> tuple[Tensor, Tensor]:
    """Per-channel (mean, scale) of the factorized hyperprior model, broadcast to ``shape``."""
    _, h, w = shape
    mean = ops.expand_channels(params[f"{PREFIX}.zprior.loc"], h, w)
    scale = ops.expand_channels(ops.softplus(params[f"{PREFIX}.zprior.scale"]) + SCALE_BOUND, h, w)
    return mean, scale


def hyper_decode(params, z_hat) -> tuple[Tensor, Tensor]:
    """Hyperprior latent -> (mean, scale) for y."""
    c_y = architecture(params).c_y
    h = _ct(params, "hyper_dec1", _lr(_ct(params, "hyper_dec0", z_hat)))
    return ops.channel_slice(h, 0, c_y), ops.softplus(ops.channel_slice(h, c_y, 2 * c_y)) + SCALE_BOUND


def temporal_prior(params, context) -> tuple[Tensor, Tensor]:
    """Context -> (mean, scale) for g."""
    c_g = architecture(params).c_g
    h = _lr(_c(params, "prior0", context, 2))
    h = _lr(_c(params, "prior1", h, 2))
    h = _c(params, "prior2", h, 2)
    return ops.channel_slice(h, 0, c_g), ops.softplus(ops.channel_slice(h, c_g, 2 * c_g)) + SCALE_BOUND


# ---------------------------------------------------------------- transforms


def encode_mv(flow, params) -> LatentPair:
    """Flow (2, H, W) -> raw motion latents; H and W must be divisible by 32."""
    flow = ops.as_tensor(flow)
    if flow.data.ndim != 3 or flow.shape[0] != 2:
        raise ValueError(f"encode_mv: flow must be (2, H, W), got {flow.shape}")
    if flow.shape[1] % 32 or flow.shape[2] % 32:
        raise ValueError(f"encode_mv: flow extents {flow.shape[1:]} must be divisible by 32")
    h = _lr(_c(params, "mv_enc0", flow, 2))
    h = _lr(_c(params, "mv_enc1", h, 2))
    y = _c(params, "mv_enc2", h, 2)
    z = _c(params, "hyper_enc1", _lr(_c(params, "hyper_enc0", y, 2)), 2)
    return LatentPair(y, z, "raw")


def decode_mv(params, y_hat) -> Tensor:
    h = _lr(_ct(params, "mv_dec0", y_hat))
    h = _lr(_ct(params, "mv_dec1", h))
    return _ct(params, "mv_dec2", h)


def context_features(params, reference) -> Tensor:
    """Reference pixels followed by learned feature planes."""
    ref = ops.as_tensor(reference)
    return ops.concat([ref, _lr(_c(params, "ctx_feat", ref))])


def context_refine(params, feats) -> Tensor:
    return feats + _c(params, "ctx_refine1", _lr(_c(params, "ctx_refine0", feats)))


def extract_context(reference, decoded_flow, params) -> Tensor:
    """Warp reference features by the decoded flow and refine them."""
    ref, flow = ops.as_tensor(reference), ops.as_tensor(decoded_flow)
    if flow.shape != (2,) + ref.shape[1:]:
        raise ValueError(f"extract_context: flow {flow.shape} does not match reference {ref.shape}")
    return context_refine(params, ops.warp(context_features(params, ref), flow))


def context_encode(params, current, context) -> Tensor:
    cur, ctx = ops.as_tensor(current), ops.as_tensor(context)
    if cur.shape[1:] != ctx.shape[1:]:
        raise ValueError(f"context_encode: frame {cur.shape} and context {ctx.shape} differ in extent")
    h = _lr(_c(params, "ctx_enc0", ops.concat([cur, ctx]), 2))
    h = _lr(_c(params, "ctx_enc1", h, 2))
    return _c(params, "ctx_enc2", h, 2)


def context_decode(params, g_hat, context) -> Tensor:
    """Quantized contextual latent + context -> reconstruction."""
    ctx = ops.as_tensor(context)
    small = ops.avgpool2x(ops.avgpool2x(ops.avgpool2x(ctx)))
    h = _lr(_ct(params, "ctx_dec0", ops.concat([g_hat, small])))
    h = _lr(_ct(params, "ctx_dec1", h))
    h = _lr(_ct(params, "ctx_dec2", h))
    out = _c(params, "ctx_out", ops.concat([h, ctx]))
    return out + ops.channel_slice(ctx, 0, architecture(params).channels)


def code_frame(current, context, params, mode: str, rng: NoiseSource | None = None):
    """Contextual coding of ``current``: returns (reconstruction, ContextLatent, bits_g)."""
    g = context_encode(params, current, context)
    g_q = quantize(ContextLatent(g), mode, rng)
    mean, scale = temporal_prior(params, context)
    bits_g = bits_estimate(g_q.g, mean, scale)
    recon = context_decode(params, g_q.g, context)
    return recon, g_q, bits_g


# ---------------------------------------------------------------- RD pass


@dataclass(frozen=True)
class RDBreakdown:
    """lam * distortion + bits_y + bits_z + bits_g, in that summation order."""

    lam: float
    distortion: float
    bits_y: float
    bits_z: float
    bits_g: float
    total: float
    floored: int = 0

    @staticmethod
    def combine(lam, distortion, bits_y, bits_z, bits_g) -> float:
        return lam * distortion + bits_y + bits_z + bits_g

    @property
    def bits(self) -> float:
        return self.bits_y + self.bits_z + self.bits_g


@dataclass
class DecodeResult:
    reconstruction: Tensor
    loss: Tensor
    rd: RDBreakdown
    latents: LatentPair  # quantized y, z
    g: ContextLatent
    flow: Tensor
    context: Tensor


def rd_loss(lam: float, distortion: Tensor, bits_y: Tensor, bits_z: Tensor, bits_g: Tensor) -> Tensor:
    return distortion * lam + bits_y + bits_z + bits_g


def _decode_pass(latents: LatentPair, reference, current, params, lam, mode, rng) -> DecodeResult:
    q = quantize(latents, mode, rng)
    z_mean, z_scale = z_model(params, q.z.shape)
    bits_z = bits_estimate(q.z, z_mean, z_scale)
    y_mean, y_scale = hyper_decode(params, q.z)
    if y_mean.shape != q.y.shape:
        raise ValueError(f"hyperprior produced {y_mean.shape} parameters for y of shape {q.y.shape}")
    bits_y = bits_estimate(q.y, y_mean, y_scale)
    flow = decode_mv(params, q.y)
    context = extract_context(reference, flow, params)
    recon, g_q, bits_g = code_frame(current, context, params, mode, rng)
    dist = mse(current, recon)
    loss = rd_loss(lam, dist, bits_y, bits_z, bits_g)
    floored = 0
    if mode == ROUND:
        g_mean, g_scale = temporal_prior(params, context)
        floored = (
            ops.floored_count(q.y, y_mean, y_scale)
            + ops.floored_count(q.z, z_mean, z_scale)
            + ops.floored_count(g_q.g, g_mean, g_scale)
        )
    rd = RDBreakdown(lam, dist.item(), bits_y.item(), bits_z.item(), bits_g.item(), loss.item(), floored)
    return DecodeResult(recon, loss, rd, q, g_q, flow, context)


def decode_pass(
    latents: LatentPair,
    reference,
    current,
    params,
    lam: float,
    mode: str = ROUND,
    rng: NoiseSource | None = None,
) -> DecodeResult:
    """One encoder-side decode of raw motion latents.

    ``mode="round"`` is the inference decoder (no tape is recorded);
    ``mode="noise"`` adds uniform noise to y, z and g and is differentiable
    end to end w.r.t. the raw latents when run under a tape.
    """
    if mode == ROUND:
        with no_grad():
            return _decode_pass(latents, reference, current, params, lam, mode, rng)
    return _decode_pass(latents, reference, current, params, lam, mode, rng)
