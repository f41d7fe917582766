"""Encoder-side descent on the motion latents with keep-best rounding.

The codec and flow network stay frozen; only the raw motion latents (y, z)
of the frame being coded are updated.  Every iteration noise-quantizes,
runs the differentiable decode, takes a plain gradient step, then rounds and
runs the true decode; the rounded latents with the lowest true RD cost seen
so far are kept.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..codec.model import NOISE, ROUND, DecodeResult, LatentPair, RDBreakdown, decode_pass, encode_mv
from ..grad import Tape, Tensor, no_grad
from ..motion.flownet import estimate_flow
from ..optim import step_lr

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 1500
DEFAULT_LR = 5e-3
DEFAULT_MILESTONES = {1200: 0.5}
DEFAULT_WEIGHTS = (1.0, 0.5, 0.2, 0.1)

_iterations_run = 0


def optimizer_iterations() -> int:
    """Process-wide count of latent-update iterations executed so far."""
    return _iterations_run


@dataclass
class OptConfig:
    iterations: int = DEFAULT_ITERATIONS
    lr: float = DEFAULT_LR
    milestones: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_MILESTONES))
    seed: int = 0
    eval_every: int = 1  # run the rounded decode every k-th iteration (and on the last)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if not self.lr > 0:
            raise ValueError(f"initial step size must be positive, got {self.lr}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")

    @classmethod
    def constant(cls, iterations: int, lr: float = DEFAULT_LR, seed: int = 0) -> "OptConfig":
        return cls(iterations=iterations, lr=lr, milestones={}, seed=seed)


@dataclass
class WindowConfig:
    size: int = 4
    weights: Sequence[float] = DEFAULT_WEIGHTS

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"window size must be >= 2, got {self.size}")
        if len(self.weights) < self.size - 1:
            raise ValueError(f"{len(self.weights)} weights for a window coding {self.size - 1} frames")
        if self.weights[0] != 1.0:
            raise ValueError("the weight of the first coded frame must be 1")


def lr_schedule(i: int, cfg: OptConfig) -> float:
    return step_lr(cfg.lr, i, cfg.milestones)


def window_schedule(gop_length: int, frame_index: int, size: int) -> int:
    """Window size for the frame at ``frame_index`` of a GOP: shrinks by one per frame near the end, never below 2."""
    if not 0 <= frame_index < gop_length:
        raise ValueError(f"frame index {frame_index} outside GOP of length {gop_length}")
    return max(2, min(size, gop_length - frame_index + 1))


def window_loss(terms, weights):
    """Weighted sum of per-frame RD losses, first term first."""
    total = terms[0] * weights[0]
    for t, a in zip(terms[1:], weights[1:]):
        total = total + t * a
    return total


@dataclass
class OptResult:
    y_hat: np.ndarray
    z_hat: np.ndarray
    g_hat: np.ndarray
    reconstruction: np.ndarray
    rd: RDBreakdown  # first coded frame's rounded decode at the kept latents
    cost: float  # objective value that keep-best minimized
    initial_cost: float
    trace: list[float]  # best cost after 0, 1, ..., N iterations
    best_iteration: int  # 0 means the initial latents were never beaten
    iterations: int
    skipped: list[int] = field(default_factory=list)


@dataclass
class _Candidate:
    cost: float
    decoded: DecodeResult


def _descend(
    y0: np.ndarray,
    z0: np.ndarray,
    noise_objective: Callable[[Tensor, Tensor, np.random.Generator], Tensor],
    rounded_objective: Callable[[LatentPair], _Candidate],
    cfg: OptConfig,
) -> OptResult:
    global _iterations_run
    rng = np.random.default_rng(cfg.seed)
    y, z = np.array(y0, dtype=np.float64), np.array(z0, dtype=np.float64)
    best = rounded_objective(LatentPair(Tensor(y), Tensor(z)))
    initial, best_iter = best.cost, 0
    trace = [best.cost]
    skipped: list[int] = []
    for i in range(cfg.iterations):
        _iterations_run += 1
        with Tape() as tape:
            ty, tz = tape.leaf(y, "y"), tape.leaf(z, "z")
            loss = noise_objective(ty, tz, rng)
        if not np.isfinite(loss.item()):
            log.warning("latent descent: non-finite loss at iteration %d, update skipped", i)
            skipped.append(i)
            trace.append(best.cost)
            continue
        gy, gz = tape.backward(loss, [ty, tz])
        if not (np.all(np.isfinite(gy)) and np.all(np.isfinite(gz))):
            log.warning("latent descent: non-finite gradient at iteration %d, update skipped", i)
            skipped.append(i)
            trace.append(best.cost)
            continue
        lr = lr_schedule(i, cfg)
        y = y - lr * gy
        z = z - lr * gz
        if (i + 1) % cfg.eval_every == 0 or i + 1 == cfg.iterations:
            cand = rounded_objective(LatentPair(Tensor(y), Tensor(z)))
            if cand.cost < best.cost:
                best, best_iter = cand, i + 1
        trace.append(best.cost)
    d = best.decoded
    return OptResult(
        y_hat=d.latents.y.data,
        z_hat=d.latents.z.data,
        g_hat=d.g.g.data,
        reconstruction=d.reconstruction.data,
        rd=d.rd,
        cost=best.cost,
        initial_cost=initial,
        trace=trace,
        best_iteration=best_iter,
        iterations=cfg.iterations,
        skipped=skipped,
    )


def initial_latents(current, reference, params, init_flow=None) -> tuple[np.ndarray, np.ndarray]:
    """Raw (y, z) from the flow estimator, or from ``init_flow`` when given."""
    with no_grad():
        flow = estimate_flow(current, reference, params) if init_flow is None else init_flow
        lat = encode_mv(flow, params)
    return lat.y.data, lat.z.data


def optimize_single_frame(
    current,
    reference,
    params,
    lam: float,
    cfg: OptConfig = OptConfig(),
    init_flow=None,
    init_latents: tuple[np.ndarray, np.ndarray] | None = None,
) -> OptResult:
    """Refine one P-frame's motion latents for ``cfg.iterations`` steps."""
    current = np.asarray(current, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    y0, z0 = init_latents if init_latents is not None else initial_latents(current, reference, params, init_flow)

    def noise_objective(y, z, rng):
        return decode_pass(LatentPair(y, z), reference, current, params, lam, NOISE, rng).loss

    def rounded_objective(lat):
        d = decode_pass(lat, reference, current, params, lam, ROUND)
        return _Candidate(d.rd.total, d)

    return _descend(y0, z0, noise_objective, rounded_objective, cfg)


def _follow_noise(frames, first_recon, params, lam, rng):
    """Noise-mode losses of frames coded on top of ``first_recon`` by the frozen pipeline."""
    terms, ref = [], first_recon
    for cur in frames:
        lat = encode_mv(estimate_flow(cur, ref, params), params)
        d = decode_pass(LatentPair(lat.y, lat.z), ref, cur, params, lam, NOISE, rng)
        terms.append(d.loss)
        ref = d.reconstruction
    return terms


def _follow_rounded(frames, first_recon, params, lam):
    costs, ref = [], first_recon
    with no_grad():
        for cur in frames:
            lat = encode_mv(estimate_flow(cur, ref, params), params)
            d = decode_pass(lat, ref, cur, params, lam, ROUND)
            costs.append(d.rd.total)
            ref = d.reconstruction
    return costs


def optimize_window(
    frames: Sequence[np.ndarray],
    reference,
    params,
    lam: float,
    wcfg: WindowConfig = WindowConfig(),
    cfg: OptConfig = OptConfig(),
    init_flow=None,
    init_latents: tuple[np.ndarray, np.ndarray] | None = None,
) -> OptResult:
    """Refine the first frame's motion latents against a weighted multi-frame RD loss.

    ``frames`` are the raw frames after ``reference``; the window holds the
    reference plus ``len(frames)`` coded frames, so ``len(frames) + 1`` must
    not exceed ``wcfg.size``.  The returned ``cost`` is the weighted rounded
    window cost, ``rd`` is the first frame's own breakdown.
    """
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    if not 1 <= len(frames) <= wcfg.size - 1:
        raise ValueError(f"window of size {wcfg.size} codes 1..{wcfg.size - 1} frames, got {len(frames)}")
    reference = np.asarray(reference, dtype=np.float64)
    current, rest = frames[0], frames[1:]
    weights = tuple(wcfg.weights[: len(frames)])
    y0, z0 = init_latents if init_latents is not None else initial_latents(current, reference, params, init_flow)

    def noise_objective(y, z, rng):
        first = decode_pass(LatentPair(y, z), reference, current, params, lam, NOISE, rng)
        terms = [first.loss] + _follow_noise(rest, first.reconstruction, params, lam, rng)
        return window_loss(terms, weights)

    def rounded_objective(lat):
        d = decode_pass(lat, reference, current, params, lam, ROUND)
        costs = [d.rd.total] + _follow_rounded(rest, d.reconstruction, params, lam)
        return _Candidate(float(window_loss(costs, weights)), d)

    return _descend(y0, z0, noise_objective, rounded_objective, cfg)
