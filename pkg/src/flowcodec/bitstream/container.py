"""FRDC container: sequence header plus one record per coded frame.

Layout (little-endian)::

    magic "FRDC" | u16 version | u32 width | u32 height | u16 channels
    u32 intra period | u32 frame count | f64 lambda | 32-byte checkpoint digest
    per frame: u8 type (0 intra, 1 inter)
      intra: u32 length, raw 8-bit planes
      inter: u32 len_z, u32 len_y, u32 len_g, z bytes, y bytes, g bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

MAGIC = b"FRDC"
VERSION = 1
INTRA, INTER = 0, 1
_HEADER = struct.Struct("<4sHIIHIId32s")


class ContainerError(ValueError):
    pass


@dataclass(frozen=True)
class FrameRecord:
    kind: int
    intra: bytes = b""
    z: bytes = b""
    y: bytes = b""
    g: bytes = b""

    @property
    def payload_bits(self) -> int:
        """Bits of entropy-coded or raw payload, excluding the framing fields."""
        return 8 * (len(self.intra) + len(self.z) + len(self.y) + len(self.g))


@dataclass
class Container:
    width: int
    height: int
    channels: int
    intra_period: int
    lam: float
    digest: bytes
    frames: list[FrameRecord] = field(default_factory=list)
    version: int = VERSION

    def to_bytes(self) -> bytes:
        if len(self.digest) != 32:
            raise ContainerError(f"checkpoint digest must be 32 bytes, got {len(self.digest)}")
        parts = [
            _HEADER.pack(
                MAGIC, self.version, self.width, self.height, self.channels,
                self.intra_period, len(self.frames), self.lam, self.digest,
            )
        ]
        for f in self.frames:
            if f.kind == INTRA:
                parts.append(struct.pack("<BI", INTRA, len(f.intra)) + f.intra)
            elif f.kind == INTER:
                parts.append(struct.pack("<BIII", INTER, len(f.z), len(f.y), len(f.g)) + f.z + f.y + f.g)
            else:
                raise ContainerError(f"unknown frame type {f.kind}")
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, expected_digest: bytes | None = None) -> "Container":
        if len(data) < _HEADER.size:
            raise ContainerError(f"container too short for header ({len(data)} < {_HEADER.size} bytes)")
        magic, version, w, h, c, period, count, lam, digest = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise ContainerError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise ContainerError(f"unsupported container version {version}, expected {VERSION}")
        if expected_digest is not None and digest != expected_digest:
            raise ContainerError(
                f"checkpoint digest mismatch: stream was coded with {digest.hex()[:16]}…, "
                f"decoder checkpoint is {expected_digest.hex()[:16]}…"
            )
        pos = _HEADER.size
        frames = []

        def take(n):
            nonlocal pos
            if pos + n > len(data):
                raise ContainerError(f"frame {len(frames)}: payload runs past end of container at byte {pos}")
            chunk = data[pos : pos + n]
            pos += n
            return chunk

        for _ in range(count):
            (kind,) = struct.unpack("<B", take(1))
            if kind == INTRA:
                (n,) = struct.unpack("<I", take(4))
                frames.append(FrameRecord(INTRA, intra=take(n)))
            elif kind == INTER:
                nz, ny, ng = struct.unpack("<III", take(12))
                frames.append(FrameRecord(INTER, z=take(nz), y=take(ny), g=take(ng)))
            else:
                raise ContainerError(f"frame {len(frames)}: unknown frame type {kind}")
        if pos != len(data):
            raise ContainerError(f"{len(data) - pos} trailing bytes after {count} frames")
        return cls(w, h, c, period, lam, digest, frames, version)


def write_container(path: str | Path, container: Container) -> None:
    Path(path).write_bytes(container.to_bytes())


def read_container(path: str | Path, expected_digest: bytes | None = None) -> Container:
    return Container.from_bytes(Path(path).read_bytes(), expected_digest)
