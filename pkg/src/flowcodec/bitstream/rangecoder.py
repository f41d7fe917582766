"""Range coder with a 64-bit state over 16-bit quantized cumulative frequencies.

The wide state keeps the truncation loss of ``range >> 16`` below 2**-40
per symbol.  The encoder keeps ``low`` as a 64-bit window and propagates
carries into the bytes already written, so no pending-byte bookkeeping is
needed.  The decoder
tracks ``code - low`` directly; bytes past the end of the stream read as zero.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PRECISION = 16
TOTAL = 1 << PRECISION
_STATE = 64
_TOP = 1 << _STATE
_BOTTOM = 1 << (_STATE - 8)
_MASK = _TOP - 1


class TruncatedStreamError(ValueError):
    """The decoder needed more bytes than the stream holds."""

    def __init__(self, position: int, length: int):
        super().__init__(f"range_decode: stream truncated, byte {position} requested but only {length} present")
        self.position = position
        self.length = length


@dataclass(frozen=True)
class CdfTable:
    """Quantized CDFs, one row per context, over the alphabet ``offset .. offset + A - 1``.

    Each row has ``A + 1`` non-decreasing entries from 0 to 2**16 and every
    symbol gets at least one count.
    """

    cdf: np.ndarray  # (K, A + 1) int64
    offset: int = -64

    def __post_init__(self):
        cdf = np.asarray(self.cdf)
        if cdf.ndim != 2 or cdf.shape[1] < 2:
            raise ValueError(f"CdfTable: expected (K, A+1) array, got shape {cdf.shape}")
        if np.any(cdf[:, 0] != 0) or np.any(cdf[:, -1] != TOTAL):
            raise ValueError("CdfTable: every row must start at 0 and end at 2**16")
        if np.any(np.diff(cdf, axis=1) < 1):
            raise ValueError("CdfTable: every symbol needs a frequency of at least 1")

    @property
    def alphabet_size(self) -> int:
        return self.cdf.shape[1] - 1

    @property
    def contexts(self) -> int:
        return self.cdf.shape[0]

    def code_length(self, symbols: Sequence[int], indexes: Sequence[int] | None = None) -> float:
        """Ideal code length in bits of ``symbols`` under the quantized tables."""
        s = np.asarray(symbols, dtype=np.int64) - self.offset
        idx = _indexes(self, len(s), indexes)
        freq = self.cdf[idx, s + 1] - self.cdf[idx, s]
        return float(np.sum(PRECISION - np.log2(freq)))


def _indexes(table: CdfTable, n: int, indexes) -> np.ndarray:
    if indexes is None:
        if table.contexts == 1:
            return np.zeros(n, dtype=np.int64)
        if table.contexts != n:
            raise ValueError(f"table has {table.contexts} contexts for {n} symbols; pass explicit indexes")
        return np.arange(n)
    idx = np.asarray(indexes, dtype=np.int64)
    if idx.shape != (n,):
        raise ValueError(f"got {idx.shape[0] if idx.ndim else 0} indexes for {n} symbols")
    if n and (idx.min() < 0 or idx.max() >= table.contexts):
        raise ValueError("context index out of range")
    return idx


def range_encode(symbols: Sequence[int], table: CdfTable, indexes: Sequence[int] | None = None) -> bytes:
    """Encode integer ``symbols``; symbol i uses CDF row ``indexes[i]``."""
    sym = np.asarray(symbols, dtype=np.int64).reshape(-1)
    idx = _indexes(table, len(sym), indexes)
    a = table.alphabet_size
    rel = sym - table.offset
    bad = np.flatnonzero((rel < 0) | (rel >= a))
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"range_encode: symbol {int(sym[i])} at position {i} outside alphabet "
            f"[{table.offset}, {table.offset + a - 1}]"
        )
    cum = table.cdf[idx, rel].tolist()
    nxt = table.cdf[idx, rel + 1].tolist()

    out = bytearray()
    low, rng = 0, _TOP
    for c, n in zip(cum, nxt):
        r = rng >> PRECISION
        low += r * c
        rng = r * (n - c)
        if low >= _TOP:
            low -= _TOP
            _carry(out)
        while rng < _BOTTOM:
            out.append(low >> (_STATE - 8))
            low = (low << 8) & _MASK
            rng <<= 8
    # shortest tail: the smallest multiple of 2**56 inside [low, low + rng)
    v = -(-low // _BOTTOM) * _BOTTOM
    if v >= _TOP:
        _carry(out)
    elif v:
        out.append(v >> (_STATE - 8))
    return bytes(out)


def _carry(out: bytearray) -> None:
    i = len(out) - 1
    while out[i] == 0xFF:
        out[i] = 0
        i -= 1
    out[i] += 1


def range_decode(data: bytes, table: CdfTable, count: int, indexes: Sequence[int] | None = None) -> np.ndarray:
    """Decode ``count`` symbols written by :func:`range_encode` with the same table and indexes."""
    idx = _indexes(table, count, indexes).tolist()
    rows = [list(map(int, row)) for row in table.cdf] if table.contexts <= count or count == 0 else None
    n = len(data)

    def byte(i):
        return data[i] if i < n else 0

    diff = 0
    for pos in range(_STATE // 8):
        diff = (diff << 8) | byte(pos)
    pos = _STATE // 8
    shifts = 0
    rng = _TOP
    out = []
    for k in idx:
        row = rows[k] if rows is not None else list(map(int, table.cdf[k]))
        r = rng >> PRECISION
        target = min(diff // r, TOTAL - 1)
        s = bisect_right(row, target) - 1
        lo = row[s]
        diff -= r * lo
        rng = r * (row[s + 1] - lo)
        while rng < _BOTTOM:
            shifts += 1
            if shifts > n:
                raise TruncatedStreamError(shifts - 1, n)
            diff = (diff << 8) | byte(pos)
            pos += 1
            rng <<= 8
        out.append(s + table.offset)
    return np.asarray(out, dtype=np.int64)
