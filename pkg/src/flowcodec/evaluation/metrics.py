"""Quality and rate metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

PSNR_CAP_DB = 99.0


def psnr(a, b) -> float:
    """PSNR in dB for frames on a [0, 1] scale; capped at 99 dB when MSE < 1e-10."""
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    err = float(np.mean((a - b) ** 2))
    if err < 1e-10:
        return PSNR_CAP_DB
    return -10.0 * np.log10(err)


@dataclass(frozen=True)
class RDPoint:
    rate: float  # bits per pixel
    psnr: float  # dB


class RDCurve:
    """Rate-distortion points sorted by rate."""

    def __init__(self, points: Iterable[RDPoint | tuple[float, float]]):
        pts = [p if isinstance(p, RDPoint) else RDPoint(float(p[0]), float(p[1])) for p in points]
        if any(p.rate <= 0 for p in pts):
            raise ValueError("RD curve rates must be positive")
        self.points = sorted(pts, key=lambda p: p.rate)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr for p in self.points])


def _as_curve(c) -> RDCurve:
    return c if isinstance(c, RDCurve) else RDCurve(c)


def bd_rate(anchor, test) -> float:
    """Bjontegaard delta rate of ``test`` against ``anchor`` in percent.

    Fits log10(rate) as a cubic in PSNR for each curve and averages the gap
    over the common PSNR interval.  Negative means ``test`` saves bits.
    """
    anchor, test = _as_curve(anchor), _as_curve(test)
    if len(anchor) < 4 or len(test) < 4:
        raise ValueError(f"bd_rate needs >= 4 points per curve, got {len(anchor)} and {len(test)}")
    pa, pt = anchor.psnrs, test.psnrs
    lo = max(pa.min(), pt.min())
    hi = min(pa.max(), pt.max())
    if not hi > lo:
        raise ValueError(f"bd_rate: PSNR ranges do not overlap ([{pa.min():.3f}, {pa.max():.3f}] vs [{pt.min():.3f}, {pt.max():.3f}])")
    fa = np.polyint(np.polyfit(pa, np.log10(anchor.rates), 3))
    ft = np.polyint(np.polyfit(pt, np.log10(test.rates), 3))
    ia = np.polyval(fa, hi) - np.polyval(fa, lo)
    it = np.polyval(ft, hi) - np.polyval(ft, lo)
    avg = (it - ia) / (hi - lo)
    return float((10.0**avg - 1.0) * 100.0)
