"""Offline fine-tuning of the flow estimator against block-MV labels."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..grad import Tape, ops
from ..optim import Adam, sgd_update, step_lr
from .flownet import FLOW_PREFIX, estimate_flow
from .labels import MVLabelGrid, densify_labels
from .losses import DEFAULT_LAMBDA_ME, me_loss

log = logging.getLogger(__name__)


@dataclass
class FinetuneConfig:
    lambda_me: float = DEFAULT_LAMBDA_ME
    iterations: int = 2000
    lr: float = 1e-4
    # iteration -> multiplier; None means halve at 80% of the run
    milestones: dict[int, float] | None = None
    batch_size: int = 1
    seed: int = 0
    optimizer: str = "adam"  # or "sgd" (plain gradient step)

    def __post_init__(self) -> None:
        if self.lambda_me <= 0:
            raise ValueError(f"lambda_me must be positive, got {self.lambda_me}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def schedule(self) -> dict[int, float]:
        if self.milestones is None:
            return {int(0.8 * self.iterations): 0.5}
        return self.milestones


def trainable(params, prefix: str) -> list[str]:
    return sorted(k for k in params if k.startswith(prefix + ".") and k.endswith((".w", ".b")))


def flow_loss_and_grads(params, batch, lambda_me: float):
    """Mean ME loss over ``batch`` of (current, reference, dense label) and its parameter gradients."""
    names = trainable(params, FLOW_PREFIX)
    with Tape() as tape:
        leaves = {k: tape.leaf(params[k], name=k) for k in names}
        full = {**params, **leaves}
        total = None
        for cur, ref, label in batch:
            flow = estimate_flow(cur, ref, full)
            term = me_loss(cur, ref, flow, label, lambda_me)
            total = term if total is None else total + term
        loss = total * (1.0 / len(batch))
    grads = tape.backward(loss, leaves.values())
    return loss.item(), dict(zip(names, grads))


def finetune_flow(
    params: dict[str, np.ndarray],
    dataset: Sequence[tuple[np.ndarray, np.ndarray, MVLabelGrid]],
    cfg: FinetuneConfig,
    history: list[tuple[int, float]] | None = None,
) -> dict[str, np.ndarray]:
    """Gradient descent on the EPE + warp-MSE objective; returns new parameters.

    ``history`` (if given) receives one ``(epoch, mean loss)`` entry per pass
    over the dataset.
    """
    if not dataset:
        raise ValueError("finetune_flow: dataset is empty")
    samples = [(np.asarray(c, float), np.asarray(r, float), densify_labels(g)) for c, r, g in dataset]
    rng = np.random.default_rng(cfg.seed)
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    adam = Adam() if cfg.optimizer == "adam" else None
    milestones = cfg.schedule()
    per_epoch = max(1, len(samples) // cfg.batch_size)
    running: list[float] = []
    for it in range(cfg.iterations):
        idx = rng.choice(len(samples), size=cfg.batch_size, replace=len(samples) < cfg.batch_size)
        loss, grads = flow_loss_and_grads(params, [samples[i] for i in idx], cfg.lambda_me)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise FloatingPointError(f"finetune_flow: non-finite loss at iteration {it}")
        lr = step_lr(cfg.lr, it, milestones)
        params = adam.update(params, grads, lr) if adam else sgd_update(params, grads, lr)
        running.append(loss)
        if (it + 1) % per_epoch == 0 or it + 1 == cfg.iterations:
            epoch_loss = float(np.mean(running))
            log.info("finetune epoch %d: loss %.6f (lr %.2e)", (it + 1) // per_epoch, epoch_loss, lr)
            if history is not None:
                history.append(((it + 1) // per_epoch, epoch_loss))
            running = []
    return params


def evaluate_flow(params, dataset) -> tuple[float, float]:
    """Mean (EPE, warp PSNR in dB) of the estimator over (current, reference, label grid) triples."""
    from ..evaluation.metrics import psnr
    from .flownet import warp
    from .losses import epe

    epes, psnrs = [], []
    for cur, ref, grid in dataset:
        flow = estimate_flow(cur, ref, params)
        epes.append(epe(flow, densify_labels(grid)).item())
        psnrs.append(psnr(cur, warp(ref, flow).data))
    return float(np.mean(epes)), float(np.mean(psnrs))
