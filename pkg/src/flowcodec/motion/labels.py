"""Block motion-vector labels and their conversion to dense flow."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

MVL_MAGIC = b"MVL1"


@dataclass
class MVLabelGrid:
    """Block motion field sampled every ``stride`` pixels.

    ``mv`` holds integer (v_i, v_j) pairs in units of 1/``precision`` pixel,
    shape (2, ceil(height/stride), ceil(width/stride)).
    """

    width: int
    height: int
    mv: np.ndarray
    stride: int = 4
    precision: int = 16
    metadata: str = ""

    def __post_init__(self) -> None:
        self.mv = np.asarray(self.mv, dtype=np.int64)
        gh, gw = math.ceil(self.height / self.stride), math.ceil(self.width / self.stride)
        if self.mv.shape != (2, gh, gw):
            raise ValueError(f"label grid must be (2, {gh}, {gw}) for {self.width}x{self.height} at stride {self.stride}, got {self.mv.shape}")
        if self.precision < 1:
            raise ValueError(f"precision must be >= 1, got {self.precision}")
        if np.any(np.abs(self.mv) > 32767):
            raise ValueError("motion vectors exceed the signed 16-bit range")

    @classmethod
    def from_flow(cls, flow: np.ndarray, stride: int = 4, precision: int = 16, metadata: str = "") -> "MVLabelGrid":
        """Sample a dense flow at each block's top-left pixel and quantize to 1/precision pel."""
        flow = np.asarray(flow, dtype=np.float64)
        _, h, w = flow.shape
        sampled = flow[:, ::stride, ::stride]
        mv = np.sign(sampled) * np.floor(np.abs(sampled) * precision + 0.5)
        return cls(width=w, height=h, mv=mv.astype(np.int64), stride=stride, precision=precision, metadata=metadata)


def densify_labels(grid: MVLabelGrid) -> np.ndarray:
    """Nearest-neighbour upsample by the grid stride, then divide by the precision."""
    full = np.repeat(np.repeat(grid.mv, grid.stride, axis=1), grid.stride, axis=2)
    return full[:, : grid.height, : grid.width].astype(np.float64) / grid.precision


# ---------------------------------------------------------------- file format


def _write_one(fh: BinaryIO, grid: MVLabelGrid) -> None:
    meta = grid.metadata.encode("utf-8")
    fh.write(MVL_MAGIC)
    fh.write(struct.pack("<IIHHI", grid.width, grid.height, grid.stride, grid.precision, len(meta)))
    fh.write(meta)
    cells = np.ascontiguousarray(grid.mv.transpose(1, 2, 0)).astype("<i2")
    fh.write(cells.tobytes())


def write_mv_labels(path: str | Path, grids: Iterable[MVLabelGrid]) -> None:
    """Write one or more label grids back to back."""
    with open(path, "wb") as fh:
        for g in grids:
            _write_one(fh, g)


def read_mv_labels(path: str | Path) -> list[MVLabelGrid]:
    data = Path(path).read_bytes()
    grids, pos = [], 0
    while pos < len(data):
        if data[pos : pos + 4] != MVL_MAGIC:
            raise ValueError(f"{path}: bad label magic at byte {pos}")
        pos += 4
        if pos + 16 > len(data):
            raise ValueError(f"{path}: truncated label header at byte {pos}")
        w, h, s, p, mlen = struct.unpack_from("<IIHHI", data, pos)
        pos += 16
        meta = data[pos : pos + mlen].decode("utf-8")
        pos += mlen
        gh, gw = math.ceil(h / s), math.ceil(w / s)
        n = gh * gw * 2 * 2
        if pos + n > len(data):
            raise ValueError(f"{path}: truncated label cells at byte {pos}")
        cells = np.frombuffer(data, dtype="<i2", count=gh * gw * 2, offset=pos).reshape(gh, gw, 2)
        pos += n
        grids.append(MVLabelGrid(width=w, height=h, mv=cells.transpose(2, 0, 1).astype(np.int64), stride=s, precision=p, metadata=meta))
    return grids
