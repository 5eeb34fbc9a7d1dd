"""Bit-exact serialized format for compressed pseudo-gradient messages.

Layout (all multi-byte header fields little-endian):

    header  : magic b"SPGM" | version u8 | value_bits u8 | index_codec u8 |
              reserved u8 | param_len u64 | chunk_size u32 | k u32 |
              num_chunks u32                                   (28 bytes)
    body    : per chunk, MSB-first bit-packed, no per-chunk padding:
                scale      16 bits  (IEEE float16 pattern)
                indices    naive: k_c * ceil(log2 C_c) bits
                           enumerative: ceil(log2 binom(C_c, k_c)) bits
                values     k_c * value_bits bits (float32 patterns for b=32)
              where C_c is the chunk's actual length (the tail chunk may be
              shorter) and k_c = min(k, C_c).
    padding : zero bits to the next byte boundary, message end only.

k = 0 is legal and yields a header-only message. The byte length is a pure
function of (param_len, chunk_size, k, value_bits, codec); see
message_size_bytes.
"""

from __future__ import annotations

import struct

import numpy as np

from . import index_codec as ic
from .compress import VALID_BITS, QuantizedChunks
from .vectors import ChunkLayout, chunk_layout

MAGIC = b"SPGM"
VERSION = 1
_HEADER = struct.Struct("<4sBBBBQIII")
HEADER_BYTES = _HEADER.size  # 28


def _chunk_body_bits(chunk_len: int, k: int, bits: int, codec: str) -> int:
    kc = min(k, chunk_len)
    return 16 + ic.index_payload_bits(chunk_len, kc, codec) + kc * bits


def message_size_bytes(
    param_len: int, chunk_size: int, k: int, bits: int, codec: str
) -> int:
    """Exact byte length of a serialized message, without materializing it."""
    if bits not in VALID_BITS:
        raise ValueError(f"bits must be one of {VALID_BITS}")
    if k < 0:
        raise ValueError("k must be >= 0")
    layout = chunk_layout(param_len, chunk_size)
    if k > chunk_size:
        raise ValueError(f"k={k} exceeds chunk_size={chunk_size}")
    if k == 0:
        return HEADER_BYTES
    total_bits = layout.full_chunks * _chunk_body_bits(chunk_size, k, bits, codec)
    if layout.tail_len != layout.chunk_size:
        total_bits += _chunk_body_bits(layout.tail_len, k, bits, codec)
    return HEADER_BYTES + (total_bits + 7) // 8


def serialize(q: QuantizedChunks, codec: str) -> bytes:
    """Serialize quantized chunks to the wire format above."""
    if codec not in ic.CODEC_IDS:
        raise ValueError(f"unknown index codec {codec!r}")
    layout = q.layout
    if len(q.indices) != layout.num_chunks or len(q.codes) != layout.num_chunks:
        raise ValueError("chunk metadata inconsistent with layout")
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        q.bits,
        ic.CODEC_IDS[codec],
        0,
        layout.length,
        layout.chunk_size,
        q.k,
        layout.num_chunks,
    )
    if q.k == 0:
        return header
    w = ic.BitWriter()
    for c in range(layout.num_chunks):
        clen = layout.chunk_len(c)
        kc = min(q.k, clen)
        if len(q.indices[c]) != kc:
            raise ValueError(f"chunk {c}: expected {kc} indices, got {len(q.indices[c])}")
        w.write(int(np.float16(q.scales[c]).view(np.uint16)), 16)
        ic.encode_indices(clen, [int(i) for i in q.indices[c]], codec, w)
        if q.bits == 32:
            for v in np.asarray(q.codes[c], dtype=np.float32):
                w.write(int(v.view(np.uint32)), 32)
        else:
            for v in q.codes[c]:
                w.write(int(v), q.bits)
    return header + w.getvalue()


def deserialize(data: bytes):
    """Parse a message; returns (QuantizedChunks, codec name).

    Dequantizing the result reproduces the sender's dequantized sparse vector
    exactly (float32 value resolution for bits=32).
    """
    if len(data) < HEADER_BYTES:
        raise ValueError("message shorter than header")
    magic, version, bits, codec_id, _, param_len, chunk_size, k, num_chunks = _HEADER.unpack(
        data[:HEADER_BYTES]
    )
    if magic != MAGIC:
        raise ValueError("bad magic")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    if codec_id not in ic.CODEC_NAMES:
        raise ValueError(f"unknown codec id {codec_id}")
    codec = ic.CODEC_NAMES[codec_id]
    layout = chunk_layout(param_len, chunk_size)
    if layout.num_chunks != num_chunks:
        raise ValueError("num_chunks disagrees with param_len/chunk_size")
    indices, codes, scales = [], [], []
    if k > 0:
        r = ic.BitReader(data[HEADER_BYTES:])
        for c in range(num_chunks):
            clen = layout.chunk_len(c)
            kc = min(k, clen)
            scales.append(float(np.uint16(r.read(16)).view(np.float16)))
            idx = ic.decode_indices(clen, kc, codec, r)
            if idx and (
                idx[0] < 0 or idx[-1] >= clen or any(b <= a for a, b in zip(idx, idx[1:]))
            ):
                raise ValueError(f"chunk {c}: corrupt index payload")
            indices.append(np.asarray(idx, dtype=np.int64))
            if bits == 32:
                vals = np.array(
                    [np.uint32(r.read(32)) for _ in range(kc)], dtype=np.uint32
                ).view(np.float32)
                codes.append(vals)
            else:
                codes.append(np.array([r.read(bits) for _ in range(kc)], dtype=np.uint32))
    q = QuantizedChunks(layout, k, bits, indices, codes, np.asarray(scales, dtype=np.float64))
    return q, codec
