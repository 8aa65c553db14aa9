"""Shared binary file envelope: magic, version, length, payload, CRC32.

Layout (little-endian): magic (4 bytes), version u16, payload length u64,
payload, CRC32 of the payload as u32. The length field lets truncation be
reported distinctly from bit corruption.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

from .errors import (
    ChecksumError,
    FileFormatError,
    MagicError,
    TruncatedFileError,
    VersionMismatchError,
)

_HEADER = struct.Struct("<4sHQ")
_TRAILER = struct.Struct("<I")


def write_envelope(path, magic: bytes, version: int, payload: bytes) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    data = _HEADER.pack(magic, version, len(payload)) + payload
    data += _TRAILER.pack(zlib.crc32(payload) & 0xFFFFFFFF)
    Path(path).write_bytes(data)


def read_envelope(path, magic: bytes, supported_versions: tuple[int, ...]) -> tuple[int, bytes]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than header")
    got_magic, version, length = _HEADER.unpack_from(data, 0)
    if got_magic != magic:
        raise MagicError(f"{path}: expected magic {magic!r}, found {got_magic!r}")
    if version not in supported_versions:
        raise VersionMismatchError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + length + _TRAILER.size
    if len(data) < expected:
        raise TruncatedFileError(
            f"{path}: declared payload of {length} bytes, file is incomplete"
        )
    if len(data) > expected:
        raise FileFormatError(f"{path}: {len(data) - expected} trailing bytes")
    payload = data[_HEADER.size : _HEADER.size + length]
    (crc,) = _TRAILER.unpack_from(data, expected - _TRAILER.size)
    if crc != zlib.crc32(payload) & 0xFFFFFFFF:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    return version, payload


class PayloadReader:
    """Sequential struct reader over a payload buffer."""

    def __init__(self, payload: bytes, source: str = "payload"):
        self._buf = payload
        self._pos = 0
        self._source = source

    def read(self, n: int) -> bytes:
        if self._pos + n > len(self._buf):
            raise TruncatedFileError(f"{self._source}: payload ended early")
        out = self._buf[self._pos : self._pos + n]
        self._pos += n
        return out

    def unpack(self, fmt):
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return s.unpack(self.read(s.size))

    def at_end(self) -> bool:
        return self._pos == len(self._buf)

    def require_end(self) -> None:
        if not self.at_end():
            raise FileFormatError(
                f"{self._source}: {len(self._buf) - self._pos} unread payload bytes"
            )
