"""Conditional inter-frame codec: transforms, entropy models and training."""

from .model import (
    LATENT_MAX,
    LATENT_MIN,
    NOISE,
    ROUND,
    Architecture,
    ContextLatent,
    DecodeResult,
    LatentPair,
    RDBreakdown,
    ZeroNoise,
    architecture,
    bits_estimate,
    code_frame,
    context_features,
    context_refine,
    decode_mv,
    decode_pass,
    encode_mv,
    extract_context,
    hyper_decode,
    init_codec_params,
    quantize,
    rd_loss,
    temporal_prior,
    z_model,
)
from .train import DEFAULT_LAMBDAS, LAMBDA_KEY, TrainSchedule, checkpoint_lambda, train_end_to_end

__all__ = [
    "Architecture", "ContextLatent", "DEFAULT_LAMBDAS", "DecodeResult", "LAMBDA_KEY", "LATENT_MAX", "LATENT_MIN",
    "LatentPair", "NOISE", "RDBreakdown", "ROUND", "TrainSchedule", "ZeroNoise", "architecture", "bits_estimate",
    "checkpoint_lambda", "code_frame", "context_features", "context_refine", "decode_mv", "decode_pass", "encode_mv",
    "extract_context", "hyper_decode", "init_codec_params", "quantize", "rd_loss", "temporal_prior",
    "train_end_to_end", "z_model",
]
