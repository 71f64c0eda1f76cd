"""Bit-granular access to byte buffers.

Fields are big-endian bit strings: bit 0 is the most significant bit of
byte 0, so an IPv4 header's Version nibble sits at bits 0..4 and
HeaderLength at bits 4..8.
"""

from __future__ import annotations

from .errors import BitError

MAX_PACKET_BYTES = 16384
MAX_WORD_BITS = 64


def get_field(buf: bytes | bytearray, offset: int, length: int) -> int:
    """Read an arbitrary-width field as an unsigned int (no 64-bit cap)."""
    if length < 1:
        raise BitError("OUT_OF_RANGE", f"length {length} < 1")
    if offset < 0 or offset + length > len(buf) * 8:
        raise BitError("OUT_OF_RANGE", f"bits [{offset}, {offset + length}) outside {len(buf) * 8}-bit buffer")
    first = offset >> 3
    last = (offset + length + 7) >> 3
    chunk = int.from_bytes(buf[first:last], "big")
    tail = last * 8 - (offset + length)
    return (chunk >> tail) & ((1 << length) - 1)


def set_field(buf: bytearray, offset: int, length: int, value: int) -> None:
    """Write ``value`` into an arbitrary-width field; bits outside the field are kept."""
    if length < 1:
        raise BitError("OUT_OF_RANGE", f"length {length} < 1")
    if offset < 0 or offset + length > len(buf) * 8:
        raise BitError("OUT_OF_RANGE", f"bits [{offset}, {offset + length}) outside {len(buf) * 8}-bit buffer")
    if value < 0 or value >> length:
        raise BitError("VALUE_TOO_WIDE", f"{value:#x} does not fit in {length} bits")
    first = offset >> 3
    last = (offset + length + 7) >> 3
    nbytes = last - first
    tail = last * 8 - (offset + length)
    chunk = int.from_bytes(buf[first:last], "big")
    mask = ((1 << length) - 1) << tail
    chunk = (chunk & ~mask) | (value << tail)
    buf[first:last] = chunk.to_bytes(nbytes, "big")


def read_bits(buf: bytes | bytearray, offset: int, length: int) -> int:
    """Read at most 64 bits starting at bit ``offset``.

    >>> read_bits(bytes([0x45]), 0, 4)
    4
    """
    if length > MAX_WORD_BITS:
        raise BitError("WIDTH", f"length {length} > {MAX_WORD_BITS}")
    return get_field(buf, offset, length)


def write_bits(buf: bytearray, offset: int, length: int, value: int) -> None:
    if length > MAX_WORD_BITS:
        raise BitError("WIDTH", f"length {length} > {MAX_WORD_BITS}")
    set_field(buf, offset, length, value)


def _check_struct(buf: bytearray, offset: int, length: int) -> None:
    if length % 8 or offset % 8:
        raise BitError("UNALIGNED", f"offset {offset} / length {length} must be byte multiples")
    if length <= 0:
        raise BitError("OUT_OF_RANGE", "length must be positive")


def insert_bits(buf: bytearray, offset: int, length: int, value: int, limit: int = MAX_PACKET_BYTES) -> None:
    """Open a ``length``-bit gap at ``offset`` and fill it with ``value``.

    Byte-granular only; the buffer grows by ``length // 8`` bytes.
    """
    _check_struct(buf, offset, length)
    if offset > len(buf) * 8:
        raise BitError("OUT_OF_RANGE", f"insert at bit {offset} past end of {len(buf)}-byte buffer")
    if len(buf) + length // 8 > limit:
        raise BitError("OVERFLOW", f"buffer would exceed {limit} bytes")
    if value < 0 or value >> length:
        raise BitError("VALUE_TOO_WIDE", f"{value:#x} does not fit in {length} bits")
    pos = offset // 8
    buf[pos:pos] = value.to_bytes(length // 8, "big")


def delete_bits(buf: bytearray, offset: int, length: int) -> None:
    _check_struct(buf, offset, length)
    if offset + length > len(buf) * 8:
        raise BitError("OUT_OF_RANGE", f"delete [{offset}, {offset + length}) past end of buffer")
    pos = offset // 8
    del buf[pos:pos + length // 8]


def ones_complement_sum(data: bytes | bytearray) -> int:
    """16-bit ones'-complement sum of ``data`` (odd length is zero-padded)."""
    if len(data) % 2:
        data = bytes(data) + b"\x00"
    total = 0
    for i in range(0, len(data), 2):
        total += (data[i] << 8) | data[i + 1]
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def internet_checksum(data: bytes | bytearray) -> int:
    return ~ones_complement_sum(data) & 0xFFFF
