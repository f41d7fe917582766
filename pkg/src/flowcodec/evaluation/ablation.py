"""Sweeps over the number of latent updates or the window size.

Each cell codes every dataset at every available lambda; BD-rate is computed
per dataset against the sweep's anchor value (N=0 or W=2).  Wall-clock times
are reported, never asserted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..codec.train import checkpoint_lambda
from ..fileio import read_checkpoint
from ..online.optimizer import OptConfig, WindowConfig, optimizer_iterations
from ..online.sequence import GopConfig, decode_sequence, encode_sequence
from .metrics import RDCurve, bd_rate, psnr

N_SWEEP = (0, 100, 500, 1000, 1500, 2000, 2500)
W_SWEEP = (2, 3, 4, 5)


@dataclass
class Cell:
    axis: str
    value: int
    dataset: str
    lam: float
    bpp: float
    psnr: float
    encode_seconds: float
    decode_seconds: float
    decoder_iterations: int

    def record(self) -> dict:
        return {
            "kind": "cell", "axis": self.axis, "value": self.value, "dataset": self.dataset, "lambda": self.lam,
            "bpp": self.bpp, "psnr": self.psnr, "encode_s": self.encode_seconds, "decode_s": self.decode_seconds,
            "decoder_iterations": self.decoder_iterations,
        }


@dataclass
class AblationReport:
    axis: str
    cells: list[Cell] = field(default_factory=list)
    bd: dict[tuple[str, int], float | None] = field(default_factory=dict)
    absent: list[str] = field(default_factory=list)

    def records(self) -> list[dict]:
        out = [{"kind": "absent", "checkpoint": a} for a in self.absent]
        out += [c.record() for c in self.cells]
        out += [
            {"kind": "bdrate", "axis": self.axis, "dataset": d, "value": v, "bd_rate": b}
            for (d, v), b in sorted(self.bd.items())
        ]
        return out


def _load(checkpoints, absent: list[str]) -> dict[float, dict]:
    items = checkpoints.values() if isinstance(checkpoints, Mapping) else checkpoints
    loaded = {}
    for ck in items:
        if isinstance(ck, (str, Path)):
            if not Path(ck).exists():
                absent.append(str(ck))
                continue
            ck = read_checkpoint(ck)
        loaded[checkpoint_lambda(ck)] = ck
    return dict(sorted(loaded.items()))


def run_ablation(
    axis: str,
    datasets: Mapping[str, np.ndarray],
    checkpoints: Mapping[float, object] | Sequence[object],
    values: Sequence[int] | None = None,
    gop: GopConfig = GopConfig(),
    base: OptConfig = OptConfig(),
    window_iterations: int | None = None,
) -> AblationReport:
    """Sweep ``axis`` ("N" or "W") over ``values``.

    ``checkpoints`` holds parameter dicts or checkpoint paths (a list, or a
    mapping keyed by lambda); each checkpoint's own lambda is used.  Missing
    paths are recorded as absent and skipped.  For the W sweep every
    cell uses ``window_iterations`` updates (default ``base.iterations``).
    """
    if axis not in ("N", "W"):
        raise ValueError(f"axis must be 'N' or 'W', got {axis!r}")
    values = list(values if values is not None else (N_SWEEP if axis == "N" else W_SWEEP))
    report = AblationReport(axis)
    params_by_lam = _load(checkpoints, report.absent)
    for name, video in datasets.items():
        video = np.asarray(video, dtype=np.float64)
        t, c, h, w = video.shape
        count = t if gop.frames is None else min(gop.frames, t)
        for value in values:
            for lam, params in params_by_lam.items():
                if axis == "N":
                    cfg = OptConfig(value, base.lr, dict(base.milestones), base.seed, base.eval_every)
                    mode, wcfg = ("none" if value == 0 else "single"), WindowConfig(2)
                else:
                    n = base.iterations if window_iterations is None else window_iterations
                    cfg = OptConfig(n, base.lr, dict(base.milestones), base.seed, base.eval_every)
                    mode, wcfg = "window", WindowConfig(value)
                start = time.perf_counter()
                data, reports, _ = encode_sequence(video, params, GopConfig(gop.intra_period, lam, gop.frames), mode, cfg, wcfg)
                enc = time.perf_counter() - start
                before = optimizer_iterations()
                start = time.perf_counter()
                decoded = decode_sequence(data, params)
                dec = time.perf_counter() - start
                bits = sum(r.bits_total for r in reports)
                quality = float(np.mean([psnr(video[i], decoded[i]) for i in range(count)]))
                report.cells.append(
                    Cell(axis, value, name, lam, bits / (count * h * w), quality, enc, dec, optimizer_iterations() - before)
                )
        anchor_value = values[0]
        for value in values:
            report.bd[(name, value)] = _bd(report.cells, name, anchor_value, value)
    return report


def _bd(cells, dataset, anchor_value, value):
    def curve(v):
        pts = [(c.bpp, c.psnr) for c in cells if c.dataset == dataset and c.value == v]
        return RDCurve(pts) if len(pts) >= 4 else None

    a, t = curve(anchor_value), curve(value)
    if a is None or t is None:
        return None
    if value == anchor_value:
        return 0.0
    try:
        return bd_rate(a, t)
    except ValueError:
        return None
