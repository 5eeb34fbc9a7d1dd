"""Lossless coding of sorted index subsets from a chunk of known size.

Two codecs:

* naive    — each index as a fixed-width integer of ceil(log2 C) bits.
* enumerative — the whole k-subset as its rank in the combinatorial number
  system, written in ceil(log2 binom(C, k)) bits. This meets the
  information-theoretic limit for a uniformly random subset up to the
  ceiling, i.e. within 1/k bit per value.

Bit packing is MSB-first and platform independent; byte padding happens only
at message boundaries (see wire.py).
"""

from __future__ import annotations

import math
from functools import lru_cache

CODEC_NAIVE = "naive"
CODEC_ENUMERATIVE = "enumerative"
CODEC_IDS = {CODEC_NAIVE: 0, CODEC_ENUMERATIVE: 1}
CODEC_NAMES = {v: k for k, v in CODEC_IDS.items()}

_binom = lru_cache(maxsize=1 << 16)(math.comb)


class BitWriter:
    """Append-only MSB-first bit sink."""

    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._accbits = 0
        self.bit_len = 0

    def write(self, value: int, nbits: int) -> None:
        if nbits < 0 or (nbits == 0 and value != 0):
            raise ValueError("bad bit write")
        if value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        acc = (self._acc << nbits) | value
        total = self._accbits + nbits
        nbytes, rem = divmod(total, 8)
        if nbytes:
            self._bytes += (acc >> rem).to_bytes(nbytes, "big")
            acc &= (1 << rem) - 1
        self._acc = acc
        self._accbits = rem
        self.bit_len += nbits

    def getvalue(self) -> bytes:
        out = bytes(self._bytes)
        if self._accbits:
            out += bytes([self._acc << (8 - self._accbits)])
        return out


class BitReader:
    """MSB-first bit source over a bytes object."""

    def __init__(self, data: bytes, bit_len: int | None = None):
        self._data = data
        self._pos = 0
        self.bit_len = 8 * len(data) if bit_len is None else bit_len

    def read(self, nbits: int) -> int:
        if nbits == 0:
            return 0
        if self._pos + nbits > self.bit_len:
            raise ValueError("bit buffer underrun")
        start, end = self._pos, self._pos + nbits
        first, last = start // 8, (end - 1) // 8
        word = int.from_bytes(self._data[first : last + 1], "big")
        shift = 8 * (last + 1) - end
        self._pos = end
        return (word >> shift) & ((1 << nbits) - 1)


def ceil_log2(n: int) -> int:
    """Bits needed to address n distinct values; 0 when n <= 1."""
    if n < 1:
        raise ValueError("ceil_log2 needs n >= 1")
    return (n - 1).bit_length()


def log2_int(n: int) -> float:
    """log2 of an arbitrarily large positive integer, ~1e-15 relative."""
    bl = n.bit_length()
    if bl <= 53:
        return math.log2(n)
    return math.log2(n >> (bl - 53)) + (bl - 53)


def _validate_index_set(chunk_size: int, indices) -> list[int]:
    idx = list(indices)
    prev = -1
    for i in idx:
        if not prev < i < chunk_size:
            raise ValueError(f"indices must be strictly increasing in [0, {chunk_size})")
        prev = i
    return idx


def naive_bits(chunk_size: int, k: int) -> int:
    return k * ceil_log2(chunk_size)


def enumerative_bits(chunk_size: int, k: int) -> int:
    return ceil_log2(_binom(chunk_size, k))


def subset_rank(indices) -> int:
    """Combinatorial-number-system rank of a sorted index set."""
    return sum(_binom(c, j + 1) for j, c in enumerate(indices))


def subset_unrank(rank: int, chunk_size: int, k: int) -> list[int]:
    """Inverse of subset_rank among all sorted k-subsets of [0, chunk_size)."""
    out: list[int] = []
    for j in range(k, 0, -1):
        # largest c in [j-1, chunk_size-1] with binom(c, j) <= rank
        lo, hi = j - 1, chunk_size - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if _binom(mid, j) <= rank:
                lo = mid
            else:
                hi = mid - 1
        out.append(lo)
        rank -= _binom(lo, j)
    if rank != 0:
        raise ValueError("rank out of range for (chunk_size, k)")
    out.reverse()
    return out


def encode_naive(chunk_size: int, indices, writer: BitWriter) -> None:
    idx = _validate_index_set(chunk_size, indices)
    width = ceil_log2(chunk_size)
    for i in idx:
        writer.write(int(i), width)


def decode_naive(chunk_size: int, k: int, reader: BitReader) -> list[int]:
    width = ceil_log2(chunk_size)
    return [reader.read(width) for _ in range(k)]


def encode_enumerative(chunk_size: int, indices, writer: BitWriter) -> None:
    idx = _validate_index_set(chunk_size, indices)
    writer.write(subset_rank(idx), enumerative_bits(chunk_size, len(idx)))


def decode_enumerative(chunk_size: int, k: int, reader: BitReader) -> list[int]:
    rank = reader.read(enumerative_bits(chunk_size, k))
    return subset_unrank(rank, chunk_size, k)


def index_payload_bits(chunk_size: int, k: int, codec: str) -> int:
    if codec == CODEC_NAIVE:
        return naive_bits(chunk_size, k)
    if codec == CODEC_ENUMERATIVE:
        return enumerative_bits(chunk_size, k)
    raise ValueError(f"unknown index codec {codec!r}")


def bits_per_value(chunk_size: int, k: int, codec: str) -> float:
    """Index payload bits divided by k. codec 'limit' gives log2 binom(C,k)/k."""
    if not 1 <= k <= chunk_size:
        raise ValueError(f"k={k} out of range for chunk_size={chunk_size}")
    if codec == "limit":
        return log2_int(_binom(chunk_size, k)) / k
    return index_payload_bits(chunk_size, k, codec) / k


def encode_indices(chunk_size: int, indices, codec: str, writer: BitWriter) -> None:
    if codec == CODEC_NAIVE:
        encode_naive(chunk_size, indices, writer)
    elif codec == CODEC_ENUMERATIVE:
        encode_enumerative(chunk_size, indices, writer)
    else:
        raise ValueError(f"unknown index codec {codec!r}")


def decode_indices(chunk_size: int, k: int, codec: str, reader: BitReader) -> list[int]:
    if codec == CODEC_NAIVE:
        return decode_naive(chunk_size, k, reader)
    if codec == CODEC_ENUMERATIVE:
        return decode_enumerative(chunk_size, k, reader)
    raise ValueError(f"unknown index codec {codec!r}")
