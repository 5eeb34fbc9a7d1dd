"""Deterministic multi-replica simulator for communication-efficient
local-update training: chunked top-k sparsification with error feedback and
quantization over pseudo-gradients, baselines, ablations, and exact
communication-volume accounting."""

__version__ = "0.1.0"
