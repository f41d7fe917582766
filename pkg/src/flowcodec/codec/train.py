"""Joint end-to-end training of the flow estimator and the codec."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..grad import Tape
from ..motion.finetune import trainable
from ..motion.flownet import FLOW_PREFIX, estimate_flow
from ..optim import Adam, step_lr
from .model import NOISE, PREFIX, LatentPair, decode_pass, encode_mv, trainable_codec_names

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (256.0, 512.0, 1024.0, 2048.0)
LAMBDA_KEY = "meta.lambda"


@dataclass
class TrainSchedule:
    iterations: int = 2000
    lr: float = 1e-4
    milestones: dict[int, float] = field(default_factory=dict)
    batch_size: int = 1
    seed: int = 0
    train_flow: bool = True


def rd_objective(params, batch, lam: float, rng) -> "Tensor":  # noqa: F821
    """Mean noise-mode RD loss over (current, reference) pairs."""
    total = None
    for cur, ref in batch:
        flow = estimate_flow(cur, ref, params)
        latents = encode_mv(flow, params)
        term = decode_pass(LatentPair(latents.y, latents.z), ref, cur, params, lam, NOISE, rng).loss
        total = term if total is None else total + term
    return total * (1.0 / len(batch))


def rd_loss_and_grads(params, names, batch, lam, rng):
    with Tape() as tape:
        leaves = {k: tape.leaf(params[k], name=k) for k in names}
        loss = rd_objective({**params, **leaves}, batch, lam, rng)
    grads = tape.backward(loss, leaves.values())
    return loss.item(), dict(zip(names, grads))


def train_end_to_end(
    params: dict[str, np.ndarray],
    flow_params: dict[str, np.ndarray],
    dataset: Sequence[tuple[np.ndarray, np.ndarray]],
    lam: float,
    schedule: TrainSchedule = TrainSchedule(),
    history: list[float] | None = None,
) -> dict[str, np.ndarray]:
    """Minimize lam * MSE + bits over ``dataset`` with noise quantization.

    Returns a merged parameter dict (codec + flow + ``meta.lambda``) ready to
    be written as one checkpoint.
    """
    if not dataset:
        raise ValueError("train_end_to_end: dataset is empty")
    merged = {k: np.array(v, dtype=np.float64) for k, v in {**flow_params, **params}.items()}
    merged[LAMBDA_KEY] = np.array([float(lam)])
    names = trainable_codec_names(merged)
    if schedule.train_flow:
        names += trainable(merged, FLOW_PREFIX)
    samples = [(np.asarray(c, float), np.asarray(r, float)) for c, r in dataset]
    rng = np.random.default_rng(schedule.seed)
    adam = Adam()
    for it in range(schedule.iterations):
        idx = rng.choice(len(samples), size=schedule.batch_size, replace=len(samples) < schedule.batch_size)
        loss, grads = rd_loss_and_grads(merged, names, [samples[i] for i in idx], lam, rng)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise FloatingPointError(f"train_end_to_end: non-finite loss at iteration {it}")
        lr = step_lr(schedule.lr, it, schedule.milestones)
        merged = adam.update(merged, grads, lr)
        if history is not None:
            history.append(loss)
        if it % 50 == 0:
            log.info("train lam=%g iter %d: loss %.3f", lam, it, loss)
    return merged


def checkpoint_lambda(params) -> float:
    if LAMBDA_KEY not in params:
        raise KeyError(f"checkpoint has no {LAMBDA_KEY} entry")
    return float(np.asarray(params[LAMBDA_KEY]).reshape(-1)[0])


__all__ = [
    "DEFAULT_LAMBDAS", "LAMBDA_KEY", "PREFIX", "TrainSchedule", "checkpoint_lambda", "rd_loss_and_grads",
    "rd_objective", "train_end_to_end",
]
