"""Little-endian binary primitives (LEB128 varints) for the file formats."""

import io
import struct

from .errors import CorruptFileError


def write_varint(out: io.BytesIO, value: int) -> None:
    if value < 0:
        raise ValueError("varints are unsigned")
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.write(bytes((byte | 0x80,)))
        else:
            out.write(bytes((byte,)))
            return


def read_varint(buf: io.BytesIO) -> int:
    result = 0
    shift = 0
    while True:
        raw = buf.read(1)
        if not raw:
            raise CorruptFileError("truncated varint")
        byte = raw[0]
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result
        shift += 7
        if shift > 63:
            raise CorruptFileError("varint too long")


def write_f64(out: io.BytesIO, value: float) -> None:
    out.write(struct.pack("<d", value))


def read_f64(buf: io.BytesIO) -> float:
    raw = buf.read(8)
    if len(raw) != 8:
        raise CorruptFileError("truncated float")
    return struct.unpack("<d", raw)[0]


def write_u32(out: io.BytesIO, value: int) -> None:
    out.write(struct.pack("<I", value))


def read_u32(buf: io.BytesIO) -> int:
    raw = buf.read(4)
    if len(raw) != 4:
        raise CorruptFileError("truncated u32")
    return struct.unpack("<I", raw)[0]


def expect_magic(buf: io.BytesIO, magic: bytes) -> None:
    raw = buf.read(len(magic))
    if raw != magic:
        raise CorruptFileError(f"bad magic: expected {magic!r}, got {raw!r}")


def expect_eof(buf: io.BytesIO) -> None:
    if buf.read(1):
        raise CorruptFileError("trailing bytes after payload")
