"""GOP-level encoding and decoding of whole sequences.

Intra frames are stored as raw 8-bit planes.  P-frames take their initial
motion latents from the flow estimator on (current, previous
reconstruction); the selected mode then decides whether the latents are
refined before rounding and entropy coding.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..bitstream.container import INTRA, Container, FrameRecord
from ..bitstream.frames import decode_inter_frame, decode_intra_frame, encode_inter_frame, intra_payload
from ..codec.model import RDBreakdown, architecture
from ..codec.train import checkpoint_lambda
from ..evaluation.metrics import psnr
from ..fileio import params_digest
from .optimizer import OptConfig, WindowConfig, optimize_single_frame, optimize_window, window_schedule

log = logging.getLogger(__name__)

MODES = ("none", "single", "window")
LOG_FIELDS = ("frame", "type", "bits_y", "bits_z", "bits_g", "bits_total", "mse", "psnr", "iterations", "best_iter")


@dataclass
class GopConfig:
    intra_period: int = 12
    lam: float | None = None  # defaults to the checkpoint's lambda
    frames: int | None = None  # code only the first n frames

    def __post_init__(self):
        if self.intra_period < 1:
            raise ValueError(f"intra period must be >= 1, got {self.intra_period}")


@dataclass
class FrameReport:
    frame: int
    type: str
    bits_y: int
    bits_z: int
    bits_g: int
    bits_total: int
    mse: float
    psnr: float
    iterations: int
    best_iter: int
    rd: RDBreakdown | None = None  # estimated breakdown of the kept rounded latents
    initial_cost: float | None = None
    cost: float | None = None

    def log_line(self) -> str:
        d = asdict(self)
        return json.dumps({k: d[k] for k in LOG_FIELDS})


def _check_lambda(params, lam):
    have = checkpoint_lambda(params)
    if lam is not None and float(lam) != have:
        raise ValueError(f"no checkpoint for lambda {lam}: the loaded checkpoint was trained for lambda {have}")
    return have


def encode_sequence(
    video,
    params,
    gop: GopConfig = GopConfig(),
    mode: str = "single",
    cfg: OptConfig = OptConfig(),
    wcfg: WindowConfig = WindowConfig(),
) -> tuple[bytes, list[FrameReport], np.ndarray]:
    """Code ``video`` (T, C, H, W) and return (container bytes, per-frame reports, reconstructions)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 4:
        raise ValueError(f"video must be (T, C, H, W), got {video.shape}")
    t_all, c, h, w = video.shape
    if h % 32 or w % 32:
        raise ValueError(f"frame {h}x{w} must be divisible by 32")
    if c != architecture(params).channels:
        raise ValueError(f"video has {c} channels, checkpoint codes {architecture(params).channels}")
    lam = _check_lambda(params, gop.lam)
    count = t_all if gop.frames is None else min(gop.frames, t_all)
    container = Container(w, h, c, gop.intra_period, lam, params_digest(params))
    reports: list[FrameReport] = []
    recons = np.empty((count, c, h, w))
    run_cfg = OptConfig(0, cfg.lr, dict(cfg.milestones), cfg.seed, cfg.eval_every) if mode == "none" else cfg

    for i in range(count):
        frame = video[i]
        pos = i % gop.intra_period
        if pos == 0:
            payload, recon = intra_payload(frame)
            record = FrameRecord(INTRA, intra=payload)
            err = float(np.mean((frame - recon) ** 2))
            rep = FrameReport(i, "I", 0, 0, 0, record.payload_bits, err, psnr(frame, recon), 0, 0)
        else:
            ref = recons[i - 1]
            gop_len = min(gop.intra_period, count - (i - pos))
            size = window_schedule(gop_len, pos, wcfg.size) if mode == "window" else 2
            frame_cfg = OptConfig(run_cfg.iterations, run_cfg.lr, dict(run_cfg.milestones), run_cfg.seed + i, run_cfg.eval_every)
            if size > 2:
                res = optimize_window(video[i : i + size - 1], ref, params, lam, WindowConfig(size, wcfg.weights), frame_cfg)
            else:
                res = optimize_single_frame(frame, ref, params, lam, frame_cfg)
            record = encode_inter_frame(res.y_hat, res.z_hat, res.g_hat, params, ref)
            recon = res.reconstruction
            bz, by, bg = 8 * len(record.z), 8 * len(record.y), 8 * len(record.g)
            rep = FrameReport(
                i, "P", by, bz, bg, by + bz + bg, res.rd.distortion, psnr(frame, recon),
                res.iterations, res.best_iteration, res.rd, res.initial_cost, res.cost,
            )
        container.frames.append(record)
        recons[i] = recon
        reports.append(rep)
        log.info(rep.log_line())
    return container.to_bytes(), reports, recons


def decode_sequence(data: bytes, params) -> np.ndarray:
    """Reconstruct every frame of a container from the bitstream and the checkpoint alone."""
    container = Container.from_bytes(data, expected_digest=params_digest(params))
    shape = (container.channels, container.height, container.width)
    out = np.empty((len(container.frames),) + shape)
    for i, record in enumerate(container.frames):
        if record.kind == INTRA:
            out[i] = decode_intra_frame(record, shape)
        else:
            if i == 0:
                raise ValueError("decode_sequence: stream starts with an inter frame")
            out[i] = decode_inter_frame(record, params, out[i - 1])
    return out
