"""Chunked top-k / random-k selection, optional per-chunk DCT, and b-bit
symmetric quantization of the selected values.

The quantizer is a per-chunk mid-rise uniform code on [-s, s] with 2^b
levels, where s is the absmax of the chunk's selected values rounded *up* to
the nearest 16-bit float (the scale is transmitted as float16, so rounding it
into the code keeps serialize/deserialize an exact identity and keeps the
error bound |x - deq(x)| <= s/2^b valid against the stored scale).

b = 1 is special-cased as sign + mean-magnitude, b = 32 is a pass-through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vectors import ChunkLayout

VALID_BITS = (1, 2, 3, 4, 32)

_F16_MAX = 65504.0


@dataclass
class SelectionResult:
    """Per-chunk sorted local indices and the input values at those indices."""

    layout: ChunkLayout
    k: int
    indices: list  # per chunk: int64 array, strictly increasing
    values: list  # per chunk: float array, input entries at `indices`


@dataclass
class QuantizedChunks:
    """Selection plus per-chunk quantization codes and stored scales."""

    layout: ChunkLayout
    k: int
    bits: int
    indices: list  # per chunk: int64 array
    codes: list  # per chunk: uint32 array (b<32) or float array (b=32)
    scales: np.ndarray  # per chunk: float64, already rounded to float16 grid


def _chunk_views(v: np.ndarray, layout: ChunkLayout):
    for c in range(layout.num_chunks):
        yield v[layout.chunk_slice(c)]


def chunk_topk(v: np.ndarray, layout: ChunkLayout, k: int) -> SelectionResult:
    """k largest-magnitude entries per chunk, ties broken by lower index.

    The tail chunk selects min(k, tail_len) entries.
    """
    if not 1 <= k <= layout.chunk_size:
        raise ValueError(f"k={k} out of range [1, {layout.chunk_size}]")
    if v.shape != (layout.length,):
        raise ValueError("vector does not match layout")
    indices, values = [], []
    rows = layout.full_chunks
    if rows:
        mat = v[: rows * layout.chunk_size].reshape(rows, layout.chunk_size)
        if k == layout.chunk_size:
            sel = np.broadcast_to(np.arange(k, dtype=np.int64), (rows, k))
        else:
            # stable sort on -|x| resolves magnitude ties toward lower index
            sel = np.argsort(-np.abs(mat), axis=1, kind="stable")[:, :k]
            sel = np.sort(sel, axis=1)
        picked = np.take_along_axis(mat, sel, axis=1)
        for r in range(rows):
            indices.append(sel[r].astype(np.int64))
            values.append(picked[r].copy())
    if layout.tail_len != layout.chunk_size:
        tail = v[rows * layout.chunk_size :]
        kt = min(k, layout.tail_len)
        if kt == layout.tail_len:
            sel_t = np.arange(kt, dtype=np.int64)
        else:
            sel_t = np.sort(np.argsort(-np.abs(tail), kind="stable")[:kt])
        indices.append(sel_t.astype(np.int64))
        values.append(tail[sel_t].copy())
    return SelectionResult(layout, k, indices, values)


def chunk_randk(
    v: np.ndarray, layout: ChunkLayout, k: int, rng: np.random.Generator
) -> SelectionResult:
    """k indices per chunk drawn uniformly without replacement from rng."""
    if not 1 <= k <= layout.chunk_size:
        raise ValueError(f"k={k} out of range [1, {layout.chunk_size}]")
    if v.shape != (layout.length,):
        raise ValueError("vector does not match layout")
    indices, values = [], []
    for c, chunk in enumerate(_chunk_views(v, layout)):
        kc = min(k, len(chunk))
        if kc == len(chunk):
            sel = np.arange(kc, dtype=np.int64)
        else:
            sel = np.sort(rng.choice(len(chunk), size=kc, replace=False)).astype(np.int64)
        indices.append(sel)
        values.append(chunk[sel].copy())
    return SelectionResult(layout, k, indices, values)


def _dct_matrix(n: int) -> np.ndarray:
    # orthonormal DCT-II basis; cached per length
    mat = _DCT_CACHE.get(n)
    if mat is None:
        j = np.arange(n, dtype=np.float64)
        mat = np.cos(np.pi * np.outer(j, 2.0 * j + 1.0) / (2.0 * n))
        mat *= np.sqrt(2.0 / n)
        mat[0] *= np.sqrt(0.5)
        if len(_DCT_CACHE) > 8:
            _DCT_CACHE.clear()
        _DCT_CACHE[n] = mat
    return mat


_DCT_CACHE: dict[int, np.ndarray] = {}


def dct_chunk(chunk: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II of one chunk (naive O(n^2) matrix product)."""
    return (_dct_matrix(len(chunk)) @ chunk.astype(np.float64)).astype(chunk.dtype)


def dct_inverse(coeffs: np.ndarray) -> np.ndarray:
    return (_dct_matrix(len(coeffs)).T @ coeffs.astype(np.float64)).astype(coeffs.dtype)


def dct_vector(v: np.ndarray, layout: ChunkLayout) -> np.ndarray:
    out = np.empty_like(v)
    for c in range(layout.num_chunks):
        sl = layout.chunk_slice(c)
        out[sl] = dct_chunk(v[sl])
    return out


def dct_vector_inverse(v: np.ndarray, layout: ChunkLayout) -> np.ndarray:
    out = np.empty_like(v)
    for c in range(layout.num_chunks):
        sl = layout.chunk_slice(c)
        out[sl] = dct_inverse(v[sl])
    return out


def _f16_round_up(x: float) -> float:
    """Smallest float16 >= x (x >= 0). Raises if x exceeds the float16 range."""
    if x > _F16_MAX:
        raise ValueError(f"scale {x} exceeds float16 range")
    s = np.float16(x)
    if float(s) < x:
        s = np.nextafter(s, np.float16(np.inf), dtype=np.float16)
    return float(s)


def quantize(values: np.ndarray, bits: int):
    """Quantize one chunk's selected values. Returns (codes, scale).

    scale is already on the float16 grid; dequantize(codes, scale, bits)
    reconstructs exactly what a wire round trip would.
    """
    if bits not in VALID_BITS:
        raise ValueError(f"bits must be one of {VALID_BITS}")
    if values.size == 0:
        raise ValueError("cannot quantize an empty value set")
    if bits == 32:
        absmax = float(np.max(np.abs(values))) if values.size else 0.0
        return values.copy(), float(np.float16(min(absmax, _F16_MAX)))
    if bits == 1:
        scale = _f16_round_up(float(np.mean(np.abs(values))))
        codes = (values >= 0).astype(np.uint32)
        return codes, scale
    scale = _f16_round_up(float(np.max(np.abs(values))))
    levels = 1 << bits
    if scale == 0.0:
        return np.zeros(values.shape, dtype=np.uint32), 0.0
    step = 2.0 * scale / levels
    codes = np.floor((values.astype(np.float64) + scale) / step).astype(np.int64)
    codes = np.clip(codes, 0, levels - 1).astype(np.uint32)
    return codes, scale


def dequantize(codes: np.ndarray, scale: float, bits: int, dtype=np.float64) -> np.ndarray:
    """Map codes back to bin centers (or pass values through for bits=32)."""
    if bits not in VALID_BITS:
        raise ValueError(f"bits must be one of {VALID_BITS}")
    if bits == 32:
        return codes.astype(dtype)
    levels = 1 << bits
    if np.any(codes >= levels):
        raise ValueError(f"code out of range for {bits}-bit quantizer")
    if bits == 1:
        return ((2.0 * codes.astype(np.float64) - 1.0) * scale).astype(dtype)
    centers = scale * ((2.0 * codes.astype(np.float64) + 1.0) / levels - 1.0)
    return centers.astype(dtype)


def quantize_selection(sel: SelectionResult, bits: int) -> QuantizedChunks:
    codes, scales = [], []
    for vals in sel.values:
        c, s = quantize(vals, bits)
        codes.append(c)
        scales.append(s)
    return QuantizedChunks(
        sel.layout, sel.k, bits, sel.indices, codes, np.asarray(scales, dtype=np.float64)
    )


def densify(q: QuantizedChunks, dtype=np.float64) -> np.ndarray:
    """Dequantized sparse vector scattered back to full length."""
    out = np.zeros(q.layout.length, dtype=dtype)
    for c in range(q.layout.num_chunks):
        sl = q.layout.chunk_slice(c)
        if len(q.indices[c]):
            out[sl.start + q.indices[c]] = dequantize(q.codes[c], float(q.scales[c]), q.bits, dtype)
    return out


def compress_vector(
    v: np.ndarray,
    layout: ChunkLayout,
    k: int,
    bits: int,
    *,
    selection: str = "topk",
    rng: np.random.Generator | None = None,
    use_dct: bool = False,
):
    """Full compression operator: (optional DCT) -> selection -> quantize.

    Returns (quantized chunks, dense approximation in the original domain).
    The dense output is what the error-feedback buffer must subtract.
    """
    work = dct_vector(v, layout) if use_dct else v
    if selection == "topk":
        sel = chunk_topk(work, layout, k)
    elif selection == "randk":
        if rng is None:
            raise ValueError("random-k selection needs an rng")
        sel = chunk_randk(work, layout, k, rng)
    else:
        raise ValueError(f"unknown selection {selection!r}")
    q = quantize_selection(sel, bits)
    dense = densify(q, dtype=v.dtype)
    if use_dct:
        dense = dct_vector_inverse(dense, layout)
    return q, dense
