"""Color-wheel rendering of flow fields, written as binary PPM."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.colors import hsv_to_rgb


def flow_to_rgb(flow, max_magnitude: float | None = None) -> np.ndarray:
    """(2, H, W) flow -> (H, W, 3) uint8 image.

    Hue follows the direction, saturation the magnitude relative to
    ``max_magnitude`` (default: the 99th percentile of the field), value is 1,
    so zero motion is white.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ValueError(f"flow must be (2, H, W), got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow contains non-finite values")
    dx, dy = flow
    mag = np.hypot(dx, dy)
    norm = np.percentile(mag, 99) if max_magnitude is None else float(max_magnitude)
    sat = np.clip(mag / norm, 0.0, 1.0) if norm > 0 else np.zeros_like(mag)
    hue = np.mod(np.arctan2(dy, dx), 2 * np.pi) / (2 * np.pi)
    rgb = hsv_to_rgb(np.stack([hue, sat, np.ones_like(mag)], axis=-1))
    return np.clip(np.floor(rgb * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, w, h, maxval, rest = data.split(maxsplit=4)
    if magic != b"P6" or maxval != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    return np.frombuffer(rest, dtype=np.uint8).reshape(int(h), int(w), 3)


def dump_flow_visualization(flow, path: str | Path, max_magnitude: float | None = None) -> np.ndarray:
    rgb = flow_to_rgb(flow, max_magnitude)
    write_ppm(path, rgb)
    return rgb
