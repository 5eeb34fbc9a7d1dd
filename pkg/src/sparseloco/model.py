"""Small analytically-differentiable MLP classifier plus a synthetic sharded
dataset generated by a frozen random teacher network.

Parameters live in one flat vector so the optimizer/compression stack never
sees tensor shapes. Smooth (GELU-style) activations keep finite-difference
gradient checks clean.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .vectors import STREAM_DATA, STREAM_TEACHER, make_rng

_SQRT_2_OVER_PI = 0.7978845608028654
_GELU_C = 0.044715


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(_SQRT_2_OVER_PI * (x + _GELU_C * x**3)))


def _gelu_grad(x):
    u = _SQRT_2_OVER_PI * (x + _GELU_C * x**3)
    t = np.tanh(u)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x * x)


def param_count(layer_dims) -> int:
    return sum((i + 1) * o for i, o in zip(layer_dims[:-1], layer_dims[1:]))


@dataclass
class MlpModel:
    """Fully-connected classifier; weights+biases flattened layer by layer."""

    layer_dims: list
    dtype: type = np.float32
    _offsets: list = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        offs, pos = [], 0
        for i, o in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            offs.append((pos, pos + i * o, pos + i * o + o))
            pos += (i + 1) * o
        self._offsets = offs
        self.n_params = pos

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """He-normal weights, zero biases."""
        params = np.zeros(self.n_params, dtype=np.float64)
        for (w0, w1, _), (i, o) in zip(self._offsets, zip(self.layer_dims[:-1], self.layer_dims[1:])):
            params[w0:w1] = rng.standard_normal(i * o) * np.sqrt(2.0 / i)
        return params.astype(self.dtype)

    def _layer(self, params, li):
        w0, w1, b1 = self._offsets[li]
        i, o = self.layer_dims[li], self.layer_dims[li + 1]
        return params[w0:w1].reshape(i, o), params[w1:b1]

    def logits(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        a = x.astype(self.dtype)
        last = len(self._offsets) - 1
        for li in range(len(self._offsets)):
            w, b = self._layer(params, li)
            a = a @ w + b
            if li != last:
                a = _gelu(a)
        return a

    def loss_and_grad(self, params: np.ndarray, x: np.ndarray, y: np.ndarray):
        """Mean softmax cross-entropy and its gradient w.r.t. the flat params."""
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} params, got {params.shape}")
        if x.ndim != 2 or x.shape[1] != self.layer_dims[0] or x.shape[0] != y.shape[0]:
            raise ValueError("batch shapes do not match model dims")
        n = x.shape[0]
        acts = [x.astype(self.dtype)]
        pre = []
        last = len(self._offsets) - 1
        for li in range(len(self._offsets)):
            w, b = self._layer(params, li)
            z = acts[-1] @ w + b
            pre.append(z)
            acts.append(_gelu(z) if li != last else z)

        z = acts[-1]
        zmax = np.max(z, axis=1, keepdims=True)
        logsum = zmax + np.log(np.sum(np.exp(z - zmax), axis=1, keepdims=True))
        loss = float(np.mean(logsum[:, 0] - z[np.arange(n), y]))

        probs = np.exp(z - logsum)
        dz = probs
        dz[np.arange(n), y] -= 1.0
        dz /= self.dtype(n)

        grad = np.zeros(self.n_params, dtype=self.dtype)
        for li in range(last, -1, -1):
            w0, w1, b1 = self._offsets[li]
            w, _ = self._layer(params, li)
            grad[w0:w1] = (acts[li].T @ dz).reshape(-1)
            grad[w1:b1] = np.sum(dz, axis=0)
            if li:
                dz = (dz @ w.T) * _gelu_grad(pre[li - 1])
        return loss, grad


@dataclass
class ShardedDataset:
    """i.i.d. samples split round-robin into disjoint, near-equal shards."""

    inputs: np.ndarray  # (n, input_dim) float32
    labels: np.ndarray  # (n,) int32
    num_shards: int

    def shard_rows(self, r: int) -> np.ndarray:
        if not 0 <= r < self.num_shards:
            raise ValueError(f"shard {r} out of range")
        return np.arange(r, len(self.labels), self.num_shards)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


def generate_synthetic(
    seed: int,
    n_samples: int,
    input_dim: int,
    n_classes: int,
    teacher_depth: int = 2,
    num_shards: int = 1,
) -> ShardedDataset:
    """Labels come from a frozen random teacher MLP, so the task is learnable
    and fully determined by the seed.

    Teacher logits are standardized per class before the argmax so no class
    collapses to zero frequency.
    """
    if min(n_samples, input_dim, n_classes, teacher_depth, num_shards) <= 0:
        raise ValueError("all generation counts must be positive")
    x = make_rng(seed, STREAM_DATA).standard_normal((n_samples, input_dim)).astype(np.float32)
    hidden = max(16, 2 * input_dim)
    teacher = MlpModel([input_dim] + [hidden] * teacher_depth + [n_classes], dtype=np.float64)
    tp = teacher.init_params(make_rng(seed, STREAM_TEACHER))
    logits = teacher.logits(tp, x.astype(np.float64))
    logits = (logits - logits.mean(axis=0)) / (logits.std(axis=0) + 1e-12)
    labels = np.argmax(logits, axis=1).astype(np.int32)
    return ShardedDataset(x, labels, num_shards)


_DS_HEADER = struct.Struct("<4sIIII")
_DS_MAGIC = b"SDS1"


def save_dataset(ds: ShardedDataset, path) -> None:
    """Flat binary dump: header (dims, counts) + little-endian f32/i32 body."""
    with open(path, "wb") as f:
        f.write(
            _DS_HEADER.pack(
                _DS_MAGIC, len(ds.labels), ds.inputs.shape[1], ds.n_classes, ds.num_shards
            )
        )
        f.write(ds.inputs.astype("<f4").tobytes())
        f.write(ds.labels.astype("<i4").tobytes())


def load_dataset(path) -> ShardedDataset:
    with open(path, "rb") as f:
        magic, n, d, _, shards = _DS_HEADER.unpack(f.read(_DS_HEADER.size))
        if magic != _DS_MAGIC:
            raise ValueError("not a dataset file")
        x = np.frombuffer(f.read(4 * n * d), dtype="<f4").reshape(n, d)
        y = np.frombuffer(f.read(4 * n), dtype="<i4")
    return ShardedDataset(x.copy(), y.copy(), shards)


def sample_batch(
    ds: ShardedDataset, shard: int, batch_size: int, rng: np.random.Generator
):
    rows = ds.shard_rows(shard)
    pick = rows[rng.integers(0, len(rows), size=batch_size)]
    return ds.inputs[pick], ds.labels[pick].astype(np.int64)
