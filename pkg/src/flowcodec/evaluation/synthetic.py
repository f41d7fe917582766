"""Synthetic translating-texture sequences with exact motion labels.

Stands in for block MVs extracted by a traditional encoder: the labels are the
programmed motions, quantized to 1/16 pel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..motion.labels import MVLabelGrid

PRECISION = 16


@dataclass
class Region:
    """A rectangular window (pixels, half-open) showing its own texture layer and motion."""

    x0: int
    y0: int
    x1: int
    y1: int
    motions: Sequence[tuple[float, float]]


@dataclass
class SyntheticSpec:
    """``motions[t]`` is the flow (dx, dy) from frame t+1 back to frame t.

    A single pair is repeated for every transition.  Frame t+1 satisfies
    ``frame[t+1](x, y) = frame[t](x + dx, y + dy)``.
    """

    width: int = 64
    height: int = 64
    channels: int = 1
    frames: int = 24
    motions: Sequence[tuple[float, float]] = ((1.0, 0.0),)
    regions: Sequence[Region] = field(default_factory=tuple)
    texture_seed: int = 0
    smoothing: float = 2.0
    label_stride: int = 4

    def motion_program(self, motions=None) -> np.ndarray:
        m = np.asarray(self.motions if motions is None else motions, dtype=np.float64).reshape(-1, 2)
        if len(m) == 1:
            m = np.repeat(m, self.frames - 1, axis=0)
        if len(m) != self.frames - 1:
            raise ValueError(f"need {self.frames - 1} motions for {self.frames} frames, got {len(m)}")
        if np.any(m * PRECISION != np.round(m * PRECISION)):
            raise ValueError("motions must be multiples of 1/16 pel")
        return m


def _texture(rng: np.random.Generator, shape, channels: int, sigma: float) -> np.ndarray:
    tex = rng.normal(size=(channels,) + shape)
    tex = np.stack([ndimage.gaussian_filter(t, sigma, mode="wrap") for t in tex])
    lo, hi = tex.min(), tex.max()
    return 0.1 + 0.8 * (tex - lo) / (hi - lo)


def _render(tex: np.ndarray, margin: int, offset: np.ndarray, h: int, w: int) -> np.ndarray:
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [gy + margin + offset[1], gx + margin + offset[0]]
    return np.stack([ndimage.map_coordinates(t, coords, order=1, mode="nearest") for t in tex])


def gen_synthetic(spec: SyntheticSpec, seed: int | None = None):
    """Render ``spec``; returns (video (T,C,H,W), labels, flows).

    ``labels[t]`` and ``flows[t]`` describe the motion of frame t+1 relative to
    frame t, so both lists have T-1 entries.
    """
    rng = np.random.default_rng(spec.texture_seed if seed is None else seed)
    h, w = spec.height, spec.width
    layers = [(None, spec.motion_program())]
    layers += [(r, spec.motion_program(r.motions)) for r in spec.regions]
    video = np.zeros((spec.frames, spec.channels, h, w))
    flows = np.zeros((spec.frames - 1, 2, h, w))
    for region, prog in layers:
        cum = np.vstack([np.zeros(2), np.cumsum(prog, axis=0)])
        margin = int(np.ceil(np.abs(cum).max())) + 2
        tex = _texture(rng, (h + 2 * margin, w + 2 * margin), spec.channels, spec.smoothing)
        if region is None:
            mask = np.ones((h, w), dtype=bool)
        else:
            mask = np.zeros((h, w), dtype=bool)
            mask[region.y0 : region.y1, region.x0 : region.x1] = True
        for t in range(spec.frames):
            video[t][:, mask] = _render(tex, margin, cum[t], h, w)[:, mask]
        for t in range(spec.frames - 1):
            flows[t][0][mask] = prog[t][0]
            flows[t][1][mask] = prog[t][1]
    labels = [MVLabelGrid.from_flow(f, stride=spec.label_stride, precision=PRECISION, metadata="synthetic") for f in flows]
    return video, labels, list(flows)


def random_motion(rng: np.random.Generator, max_pel: float = 2.0) -> tuple[float, float]:
    """Uniform translation in [-max_pel, max_pel]^2, snapped to 1/16 pel."""
    m = np.round(rng.uniform(-max_pel, max_pel, size=2) * PRECISION) / PRECISION
    return float(m[0]), float(m[1])


def synthetic_pairs(count: int, seed: int = 0, size: int = 64, max_pel: float = 2.0, with_labels: bool = False):
    """``count`` independent (current, reference[, label grid]) pairs with random global translations."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        spec = SyntheticSpec(width=size, height=size, frames=2, motions=(random_motion(rng, max_pel),),
                             texture_seed=seed * 100_003 + i)
        video, labels, _ = gen_synthetic(spec)
        out.append((video[1], video[0], labels[0]) if with_labels else (video[1], video[0]))
    return out


def synthetic_sequence(frames: int = 24, size: int = 64, seed: int = 0, motion=(1.25, -0.5)) -> np.ndarray:
    """A single translating sequence (T, 1, size, size)."""
    video, _, _ = gen_synthetic(SyntheticSpec(width=size, height=size, frames=frames, motions=(motion,), texture_seed=seed))
    return video
