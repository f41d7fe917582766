"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tape import Tape, Tensor, no_grad

GraphBuilder = Callable[[np.random.Generator], "tuple[Callable[..., Tensor], Mapping[str, np.ndarray]]"]


@dataclass
class GradCheckReport:
    """Outcome of :func:`check_gradients`.

    ``errors`` maps each leaf name to its relative error
    ``||analytic - numeric|| / max(||analytic||, ||numeric||)`` over the
    checked entries; a leaf whose gradients are both exactly zero scores 0.
    """

    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)
    checked_entries: dict[str, int] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def lines(self) -> list[str]:
        return [
            f"{name}: rel_err={err:.3e} over {self.checked_entries[name]} entries "
            f"[{'ok' if err < self.tolerance else 'FAIL'}]"
            for name, err in self.errors.items()
        ]


def analytic_gradients(fn: Callable[..., Tensor], leaves: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    with Tape() as tape:
        tensors = {k: tape.leaf(v, name=k) for k, v in leaves.items()}
        loss = fn(**tensors)
    grads = tape.backward(loss, tensors.values())
    return dict(zip(tensors, grads))


def numeric_gradient(
    fn: Callable[..., Tensor],
    leaves: Mapping[str, np.ndarray],
    name: str,
    entries: np.ndarray,
    step: float = 1e-6,
) -> np.ndarray:
    """Central differences of ``fn`` w.r.t. the flat ``entries`` of leaf ``name``."""
    base = {k: np.array(v, dtype=np.float64) for k, v in leaves.items()}
    target = base[name].reshape(-1)
    out = np.empty(len(entries))
    with no_grad():
        for n, idx in enumerate(entries):
            keep = target[idx]
            target[idx] = keep + step
            up = fn(**{k: Tensor(v) for k, v in base.items()}).item()
            target[idx] = keep - step
            down = fn(**{k: Tensor(v) for k, v in base.items()}).item()
            target[idx] = keep
            out[n] = (up - down) / (2.0 * step)
    return out


def check_gradients(
    builder: GraphBuilder,
    tolerance: float = 1e-4,
    seed: int = 0,
    step: float = 1e-6,
    max_entries: int | None = None,
) -> GradCheckReport:
    """Compare reverse-mode gradients against two-sided finite differences.

    ``builder(rng)`` returns ``(fn, leaves)``: ``fn(**tensors)`` must build a
    scalar loss and ``leaves`` holds the randomized leaf values.  Large leaves
    can be subsampled with ``max_entries`` (entries drawn from the same rng).
    """
    rng = np.random.default_rng(seed)
    fn, leaves = builder(rng)
    analytic = analytic_gradients(fn, leaves)
    report = GradCheckReport(tolerance=tolerance)
    for name, value in leaves.items():
        n = np.size(value)
        if max_entries is not None and n > max_entries:
            entries = np.sort(rng.choice(n, size=max_entries, replace=False))
        else:
            entries = np.arange(n)
        numeric = numeric_gradient(fn, leaves, name, entries, step)
        exact = analytic[name].reshape(-1)[entries]
        scale = max(np.linalg.norm(exact), np.linalg.norm(numeric))
        err = 0.0 if scale == 0.0 else float(np.linalg.norm(exact - numeric) / scale)
        report.errors[name] = err
        report.checked_entries[name] = len(entries)
    return report
