"""Raw video ("FVID") and checkpoint ("FCKP") files. All integers little-endian."""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

VIDEO_MAGIC = b"FVID"
CHECKPOINT_MAGIC = b"FCKP"


def write_video(path: str | Path, frames: np.ndarray) -> None:
    """Store (T, C, H, W) frames in [0, 1] as 8-bit planar samples."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 4:
        raise ValueError(f"video must be (T, C, H, W), got {frames.shape}")
    t, c, h, w = frames.shape
    samples = np.clip(np.floor(frames * 255.0 + 0.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(VIDEO_MAGIC)
        fh.write(struct.pack("<IIHI", w, h, c, t))
        fh.write(samples.tobytes())


def read_video(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != VIDEO_MAGIC:
        raise ValueError(f"{path}: not an FVID file")
    w, h, c, t = struct.unpack_from("<IIHI", data, 4)
    body = data[18:]
    if len(body) != t * c * h * w:
        raise ValueError(f"{path}: expected {t * c * h * w} sample bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(t, c, h, w).astype(np.float64) / 255.0


def write_checkpoint(path: str | Path, params: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.asarray(params[name], dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an FCKP checkpoint")
    (count,) = struct.unpack_from("<I", data, 4)
    pos = 8
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        n = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes after {count} entries")
    return params


def params_digest(params: Mapping[str, np.ndarray]) -> bytes:
    """SHA-256 over sorted (name, shape, float64 values); identifies a parameter set."""
    h = hashlib.sha256()
    for name in sorted(params):
        arr = np.ascontiguousarray(np.asarray(params[name], dtype="<f8"))
        h.update(name.encode("utf-8"))
        h.update(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        h.update(arr.tobytes())
    return h.digest()
