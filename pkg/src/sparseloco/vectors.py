"""Flat parameter vectors: chunk layouts, deterministic RNG streams, vector algebra.

Every model state object in this package is a flat 1-D numpy array ("param
vector"). All reductions that cross replica boundaries are done with an
explicit left-to-right accumulation so results are bit-identical across runs
and thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DTYPES = {"float32": np.float32, "float64": np.float64}

# RNG stream ids — one Philox stream per independent consumer. Replica-indexed
# streams are offset by the replica id so execution order never matters.
STREAM_DATA = 1
STREAM_TEACHER = 2
STREAM_MODEL_INIT = 3
STREAM_BATCH_BASE = 1000
STREAM_RANDK_BASE = 2000


def make_rng(seed: int, stream_id: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream_id).

    Philox is fully specified by its key, so identical (seed, stream_id)
    yields an identical scalar stream on every platform.
    """
    return np.random.Generator(np.random.Philox(key=[seed & _U64, stream_id & _U64]))


_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class ChunkLayout:
    """Partition of a length-`length` vector into fixed-size chunks.

    The final chunk may be partial: 0 < tail_len <= chunk_size.
    """

    length: int
    chunk_size: int
    num_chunks: int
    tail_len: int

    @property
    def full_chunks(self) -> int:
        """Number of chunks of exactly chunk_size entries."""
        return self.num_chunks if self.tail_len == self.chunk_size else self.num_chunks - 1

    def chunk_len(self, c: int) -> int:
        return self.chunk_size if c < self.full_chunks else self.tail_len

    def chunk_slice(self, c: int) -> slice:
        start = c * self.chunk_size
        return slice(start, start + self.chunk_len(c))


def chunk_layout(length: int, chunk_size: int) -> ChunkLayout:
    if length <= 0:
        raise ValueError(f"vector length must be positive, got {length}")
    if chunk_size <= 0:
        raise ValueError(f"chunk size must be positive, got {chunk_size}")
    num_chunks = -(-length // chunk_size)
    tail_len = length - chunk_size * (num_chunks - 1)
    return ChunkLayout(length, chunk_size, num_chunks, tail_len)


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """a*x + y, elementwise."""
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return a * x + y


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na = float(np.sqrt(np.dot(a, a)))
    nb = float(np.sqrt(np.dot(b, b)))
    if na == 0.0 and nb == 0.0:
        raise ValueError("cosine similarity undefined for two zero vectors")
    if na == 0.0 or nb == 0.0:
        return 0.0
    c = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, c))


def mean_of(vectors) -> np.ndarray:
    """Mean of equal-length vectors with a fixed left-to-right reduction."""
    vectors = list(vectors)
    acc = np.zeros_like(vectors[0])
    for v in vectors:
        acc += v
    acc /= len(vectors)
    return acc


def assert_finite(v: np.ndarray, what: str = "vector") -> None:
    if not np.all(np.isfinite(v)):
        raise FloatingPointError(f"non-finite values in {what}")
