"""Outer-optimizer family over pseudo-gradients, and the deterministic
multi-replica training loop.

Every outer step starts from parameters that are bitwise identical across
replicas; the outer update is computed once from the (possibly compressed)
aggregate and applied identically everywhere, so replicas never drift.

Algorithms:

* adamw               data-parallel AdamW (gradients averaged every step)
* diloco              Nesterov outer momentum over averaged pseudo-gradients;
                      beta = 0 gives plain outer SGD
* diloco_lom          per-replica outer momentum, averaged only through the
                      update it produces (exactly equivalent to diloco for
                      zero-initialized accumulators)
* diloco_lom_subk     diloco_lom + zeroing the largest accumulator entries
                      after every outer step
* sparseloco          error feedback on pseudo-gradients with chunked top-k
                      and quantization; replicas exchange sparse messages
* sparseloco_nesterov ablation: the sparse aggregate additionally passes
                      through a Nesterov recurrence
* demo_lite           per-step error feedback on raw gradients with chunked
                      top-k and a sign-descent outer update (inner steps = 1)
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import compress, wire
from .config import RunConfig, SPARSE_ALGOS, resolve_k
from .model import MlpModel, ShardedDataset, generate_synthetic, sample_batch
from .optim import AdamWState, LrSchedule, adamw_step, clip_grad_norm, lr_at
from .vectors import (
    DTYPES,
    STREAM_BATCH_BASE,
    STREAM_MODEL_INIT,
    STREAM_RANDK_BASE,
    ChunkLayout,
    chunk_layout,
    cosine_similarity,
    make_rng,
    mean_of,
)


class NumericError(RuntimeError):
    """Training produced NaN/Inf state."""


class DesyncError(RuntimeError):
    """Replicas entered an outer step with unequal parameters."""


# ---------------------------------------------------------------------------
# pure outer-update operations
# ---------------------------------------------------------------------------


def pseudo_gradient(theta_prev: np.ndarray, theta_new: np.ndarray) -> np.ndarray:
    if theta_prev.shape != theta_new.shape:
        raise ValueError("length mismatch")
    return theta_prev - theta_new


def diloco_outer(theta, delta_bar, m, beta: float, alpha: float):
    """Nesterov outer update: m' = beta*m + d; theta' = theta - alpha*(d + beta*m')."""
    m_new = beta * m + delta_bar
    theta_new = theta - alpha * (delta_bar + beta * m_new)
    return theta_new, m_new


def lom_outer(theta, deltas, momenta, beta: float, alpha: float):
    """Per-replica momentum; the update averages the momentum-corrected deltas."""
    if len(deltas) != len(momenta):
        raise ValueError("replica count mismatch")
    new_momenta = [beta * m + d for m, d in zip(momenta, deltas)]
    corrected = [d + beta * m for d, m in zip(deltas, new_momenta)]
    theta_new = theta - alpha * mean_of(corrected)
    return theta_new, new_momenta


def lom_subk(m: np.ndarray, layout: ChunkLayout, fraction: float) -> np.ndarray:
    """Zero the top `fraction` of entries by magnitude (chunked selection)."""
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must be in [0, 1]")
    k = round(fraction * layout.chunk_size)
    if k == 0:
        return m.copy()
    out = m.copy()
    sel = compress.chunk_topk(m, layout, k)
    for c in range(layout.num_chunks):
        sl = layout.chunk_slice(c)
        out[sl.start + sel.indices[c]] = 0.0
    return out


def _check_synchronized(thetas) -> np.ndarray:
    theta0 = thetas[0]
    for i, t in enumerate(thetas[1:], start=1):
        if not np.array_equal(theta0, t):
            raise DesyncError(f"replica {i} desynchronized before outer update")
    return theta0


def _compress_replica(delta_or_error, layout, k, bits, *, selection, rng, use_dct, codec,
                      emit_message):
    q, dense = compress.compress_vector(
        delta_or_error, layout, k, bits, selection=selection, rng=rng, use_dct=use_dct
    )
    message = wire.serialize(q, codec) if emit_message else None
    return dense, message


def sparseloco_outer_step(
    thetas,
    deltas,
    errors,
    *,
    beta: float,
    alpha: float,
    layout: ChunkLayout,
    k: int,
    bits: int,
    codec: str = "enumerative",
    selection: str = "topk",
    use_dct: bool = False,
    randk_rngs=None,
    emit_messages: bool = False,
):
    """One outer step of error feedback + compression + sparse aggregation.

    e_r <- beta*e_r + delta_r; transmit dequantize(Q(top-k(e_r))); subtract the
    transmitted part from e_r; all replicas apply the identical aggregate.

    Returns (new thetas, new errors, transmitted dense vectors, messages).
    """
    theta = _check_synchronized(thetas)
    new_errors, transmitted, messages = [], [], []
    for r, (d, e) in enumerate(zip(deltas, errors)):
        e_acc = beta * e + d
        rng = randk_rngs[r] if randk_rngs is not None else None
        dense, msg = _compress_replica(
            e_acc, layout, k, bits,
            selection=selection, rng=rng, use_dct=use_dct, codec=codec,
            emit_message=emit_messages,
        )
        new_errors.append(e_acc - dense)
        transmitted.append(dense)
        messages.append(msg)
    aggregate = mean_of(transmitted)
    theta_new = theta - alpha * aggregate
    new_thetas = [theta_new.copy() for _ in thetas]
    return new_thetas, new_errors, transmitted, messages


def sparseloco_nesterov_outer_step(thetas, deltas, errors, nesterov_m, *, nesterov_beta,
                                   beta, alpha, **kw):
    """Ablation arm: the sparse aggregate feeds a Nesterov recurrence."""
    theta = _check_synchronized(thetas)
    new_errors, transmitted, messages = [], [], []
    for r, (d, e) in enumerate(zip(deltas, errors)):
        e_acc = beta * e + d
        rng = kw.get("randk_rngs")[r] if kw.get("randk_rngs") is not None else None
        dense, msg = _compress_replica(
            e_acc, kw["layout"], kw["k"], kw["bits"],
            selection=kw.get("selection", "topk"), rng=rng,
            use_dct=kw.get("use_dct", False), codec=kw.get("codec", "enumerative"),
            emit_message=kw.get("emit_messages", False),
        )
        new_errors.append(e_acc - dense)
        transmitted.append(dense)
        messages.append(msg)
    aggregate = mean_of(transmitted)
    theta_new, m_new = diloco_outer(theta, aggregate, nesterov_m, nesterov_beta, alpha)
    new_thetas = [theta_new.copy() for _ in thetas]
    return new_thetas, new_errors, m_new, transmitted, messages


def demo_lite_outer_step(thetas, grads, errors, *, beta, alpha, layout, k, bits,
                         codec="enumerative", selection="topk", use_dct=False,
                         randk_rngs=None, emit_messages=False):
    """Per-step EF on raw gradients; sign-descent on the sparse aggregate."""
    theta = _check_synchronized(thetas)
    new_errors, transmitted, messages = [], [], []
    for r, (g, e) in enumerate(zip(grads, errors)):
        e_acc = beta * e + g
        rng = randk_rngs[r] if randk_rngs is not None else None
        dense, msg = _compress_replica(
            e_acc, layout, k, bits,
            selection=selection, rng=rng, use_dct=use_dct, codec=codec,
            emit_message=emit_messages,
        )
        new_errors.append(e_acc - dense)
        transmitted.append(dense)
        messages.append(msg)
    aggregate = mean_of(transmitted)
    theta_new = theta - alpha * np.sign(aggregate)
    new_thetas = [theta_new.copy() for _ in thetas]
    return new_thetas, new_errors, transmitted, messages


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsRow:
    outer_step: int
    inner_step_global: int
    mean_loss: float
    replica_losses: list
    bytes_sent_per_worker: int
    cosine_to_reference: float | None
    cosine_aggregate: float | None
    wall_ms: float


@dataclass
class MetricsLog:
    rows: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.rows[-1].mean_loss

    def total_bytes_per_worker(self) -> int:
        return sum(r.bytes_sent_per_worker for r in self.rows)

    def to_csv(self, fileobj) -> None:
        n_rep = len(self.rows[0].replica_losses) if self.rows else 0
        w = csv.writer(fileobj, lineterminator="\n")
        w.writerow(
            ["outer_step", "inner_step_global", "mean_loss"]
            + [f"loss_r{r}" for r in range(n_rep)]
            + ["bytes_sent_per_worker", "cosine_to_reference", "cosine_aggregate", "wall_ms"]
        )
        for row in self.rows:
            w.writerow(
                [row.outer_step, row.inner_step_global, repr(row.mean_loss)]
                + [repr(x) for x in row.replica_losses]
                + [
                    row.bytes_sent_per_worker,
                    "" if row.cosine_to_reference is None else repr(row.cosine_to_reference),
                    "" if row.cosine_aggregate is None else repr(row.cosine_aggregate),
                    repr(row.wall_ms),
                ]
            )

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "outer_steps": len(self.rows),
            "final_loss": self.final_loss,
            "total_bytes_per_worker": self.total_bytes_per_worker(),
        }


def _safe_cos(a, b) -> float:
    if not np.any(a) or not np.any(b):
        return 0.0
    return cosine_similarity(a, b)


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------


@dataclass
class _Replica:
    theta: np.ndarray
    adam: AdamWState
    batch_rng: np.random.Generator
    randk_rng: np.random.Generator
    shard: int


def _run_inner(model, rep: _Replica, ds, cfg, schedule, step_offset: int):
    """H local AdamW steps on the replica's shard; returns per-step losses."""
    losses = []
    theta, adam = rep.theta, rep.adam
    for h in range(1, cfg.train.inner_steps + 1):
        x, y = sample_batch(ds, rep.shard, cfg.train.batch_size, rep.batch_rng)
        loss, grad = model.loss_and_grad(theta, x, y)
        grad = clip_grad_norm(grad, cfg.inner.clip_norm)
        theta, adam = adamw_step(theta, grad, adam, lr_at(schedule, step_offset + h))
        losses.append(loss)
    rep.theta, rep.adam = theta, adam
    return losses


def effective_layout_and_k(cfg: RunConfig, n_params: int):
    """Chunk layout and per-chunk k, honoring the chunking on/off switch."""
    comp = cfg.compression
    if comp.chunking:
        layout = chunk_layout(n_params, comp.chunk_size)
        k = resolve_k(comp, comp.chunk_size)
    else:
        layout = chunk_layout(n_params, n_params)
        k = comp.k if comp.k is not None else max(1, round(comp.density * n_params))
    return layout, min(k, layout.chunk_size)


def run_outer_loop(cfg: RunConfig, observer=None) -> MetricsLog:
    """Execute the configured experiment; deterministic given (config, seed).

    `observer`, if given, is called after every outer step with a dict of the
    step's internals (deltas, transmitted vectors, accumulators, parameters).
    """
    with threadpool_limits(limits=1, user_api="blas"):
        return _run_outer_loop(cfg, observer)


def _run_outer_loop(cfg: RunConfig, observer) -> MetricsLog:
    dtype = DTYPES[cfg.dtype]
    algo = cfg.algo.name
    R = cfg.train.replicas
    model = MlpModel(cfg.model.layer_dims, dtype=dtype)
    ds = generate_synthetic(
        cfg.data_seed,
        cfg.data.n_samples,
        cfg.model.input_dim,
        cfg.model.n_classes,
        cfg.data.teacher_depth,
        num_shards=R,
    )
    theta0 = model.init_params(make_rng(cfg.seed, STREAM_MODEL_INIT)).astype(dtype)

    replicas = [
        _Replica(
            theta=theta0.copy(),
            adam=AdamWState.zeros(
                model.n_params,
                dtype=dtype,
                beta1=cfg.inner.beta1,
                beta2=cfg.inner.beta2,
                eps=cfg.inner.eps,
                weight_decay=cfg.inner.weight_decay,
            ),
            batch_rng=make_rng(cfg.seed, STREAM_BATCH_BASE + r),
            randk_rng=make_rng(cfg.seed, STREAM_RANDK_BASE + r),
            shard=r,
        )
        for r in range(R)
    ]
    schedule = LrSchedule(
        base_lr=cfg.inner.lr,
        warmup_steps=cfg.inner.warmup_steps,
        total_steps=cfg.total_inner_steps,
        min_lr=cfg.inner.min_lr_ratio * cfg.inner.lr,
    )

    sparse = algo in SPARSE_ALGOS
    layout, k = effective_layout_and_k(cfg, model.n_params) if sparse else (None, None)
    if sparse:
        msg_bytes = wire.message_size_bytes(
            model.n_params, layout.chunk_size, k, cfg.compression.bits, cfg.compression.codec
        )
    else:
        # dense float32 wire convention; adamw communicates only when R > 1
        msg_bytes = 0 if (algo == "adamw" and R == 1) else 4 * model.n_params
        if algo == "adamw":
            msg_bytes *= cfg.train.inner_steps  # one sync per inner step

    m_global = np.zeros(model.n_params, dtype=dtype)
    momenta = [np.zeros(model.n_params, dtype=dtype) for _ in range(R)]
    errors = [np.zeros(model.n_params, dtype=dtype) for _ in range(R)]
    nesterov_m = np.zeros(model.n_params, dtype=dtype)
    reference_m = np.zeros(model.n_params, dtype=dtype)
    beta = cfg.algo.beta

    pool = ThreadPoolExecutor(max_workers=cfg.train.threads) if cfg.train.threads > 1 else None
    log = MetricsLog()
    try:
        for t in range(1, cfg.train.outer_steps + 1):
            t0 = time.perf_counter()
            step_offset = (t - 1) * cfg.train.inner_steps
            theta_prev = _check_synchronized([rep.theta for rep in replicas])

            if algo == "adamw":
                losses_per_replica, deltas = _adamw_ddp_step(model, replicas, ds, cfg, schedule, step_offset)
            elif algo == "demo_lite":
                # raw gradients feed the error feedback; no inner optimizer
                losses_per_replica, deltas = [], []
                for rep in replicas:
                    x, y = sample_batch(ds, rep.shard, cfg.train.batch_size, rep.batch_rng)
                    loss, grad = model.loss_and_grad(rep.theta, x, y)
                    losses_per_replica.append([loss])
                    deltas.append(grad)
            else:
                if pool is not None:
                    futs = [
                        pool.submit(_run_inner, model, rep, ds, cfg, schedule, step_offset)
                        for rep in replicas
                    ]
                    losses_per_replica = [f.result() for f in futs]
                else:
                    losses_per_replica = [
                        _run_inner(model, rep, ds, cfg, schedule, step_offset) for rep in replicas
                    ]
                deltas = [pseudo_gradient(theta_prev, rep.theta) for rep in replicas]

            transmitted = None
            if algo == "adamw":
                pass  # parameters already advanced inside _adamw_ddp_step
            elif algo == "diloco":
                delta_bar = mean_of(deltas)
                theta_new, m_global = diloco_outer(theta_prev, delta_bar, m_global, beta, cfg.algo.outer_lr)
                for rep in replicas:
                    rep.theta = theta_new.copy()
            elif algo in ("diloco_lom", "diloco_lom_subk"):
                theta_new, momenta = lom_outer(theta_prev, deltas, momenta, beta, cfg.algo.outer_lr)
                if algo == "diloco_lom_subk":
                    sub_layout = chunk_layout(model.n_params, cfg.compression.chunk_size)
                    momenta = [lom_subk(m, sub_layout, cfg.algo.subk_fraction) for m in momenta]
                for rep in replicas:
                    rep.theta = theta_new.copy()
            elif algo == "sparseloco":
                new_thetas, errors, transmitted, _ = sparseloco_outer_step(
                    [theta_prev] * R, deltas, errors,
                    beta=beta, alpha=cfg.algo.outer_lr, layout=layout, k=k,
                    bits=cfg.compression.bits, codec=cfg.compression.codec,
                    selection=cfg.compression.selection, use_dct=cfg.compression.use_dct,
                    randk_rngs=[rep.randk_rng for rep in replicas],
                )
                for rep, th in zip(replicas, new_thetas):
                    rep.theta = th
            elif algo == "sparseloco_nesterov":
                new_thetas, errors, nesterov_m, transmitted, _ = sparseloco_nesterov_outer_step(
                    [theta_prev] * R, deltas, errors, nesterov_m,
                    nesterov_beta=cfg.algo.nesterov_beta,
                    beta=beta, alpha=cfg.algo.outer_lr, layout=layout, k=k,
                    bits=cfg.compression.bits, codec=cfg.compression.codec,
                    selection=cfg.compression.selection, use_dct=cfg.compression.use_dct,
                    randk_rngs=[rep.randk_rng for rep in replicas],
                )
                for rep, th in zip(replicas, new_thetas):
                    rep.theta = th
            elif algo == "demo_lite":
                new_thetas, errors, transmitted, _ = demo_lite_outer_step(
                    [theta_prev] * R, deltas, errors,
                    beta=beta, alpha=cfg.algo.outer_lr, layout=layout, k=k,
                    bits=cfg.compression.bits, codec=cfg.compression.codec,
                    selection=cfg.compression.selection, use_dct=cfg.compression.use_dct,
                    randk_rngs=[rep.randk_rng for rep in replicas],
                )
                for rep, th in zip(replicas, new_thetas):
                    rep.theta = th
            else:  # pragma: no cover - guarded by config validation
                raise ValueError(f"unknown algorithm {algo!r}")

            # cosine diagnostic against a reference global momentum over raw deltas
            cos_ref = cos_agg = None
            if algo != "adamw":
                reference_m = beta * reference_m + mean_of(deltas)
                accumulators = {
                    "diloco": [m_global],
                    "diloco_lom": momenta,
                    "diloco_lom_subk": momenta,
                    "sparseloco": errors,
                    "sparseloco_nesterov": errors,
                    "demo_lite": errors,
                }[algo]
                cos_ref = float(np.mean([_safe_cos(reference_m, a) for a in accumulators]))
                cos_agg = _safe_cos(reference_m, mean_of(accumulators))

            replica_loss = [float(np.mean(ls)) for ls in losses_per_replica]
            mean_loss = float(np.mean(replica_loss))
            if not np.isfinite(mean_loss) or not np.all(np.isfinite(replicas[0].theta)):
                raise NumericError(f"non-finite state at outer step {t}")

            row = MetricsRow(
                outer_step=t,
                inner_step_global=t * cfg.train.inner_steps,
                mean_loss=mean_loss,
                replica_losses=replica_loss,
                bytes_sent_per_worker=msg_bytes,
                cosine_to_reference=cos_ref,
                cosine_aggregate=cos_agg,
                wall_ms=(time.perf_counter() - t0) * 1e3,
            )
            log.rows.append(row)
            if observer is not None:
                observer(
                    {
                        "outer_step": t,
                        "theta_prev": theta_prev,
                        "theta": replicas[0].theta,
                        "deltas": deltas,
                        "transmitted": transmitted,
                        "errors": errors,
                        "momenta": momenta,
                        "m_global": m_global,
                        "reference_m": reference_m,
                        "mean_loss": mean_loss,
                    }
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return log


def _adamw_ddp_step(model, replicas, ds, cfg, schedule, step_offset):
    """H data-parallel AdamW steps: per-replica grads averaged every step."""
    losses_per_replica = [[] for _ in replicas]
    theta = replicas[0].theta
    adam = replicas[0].adam
    for h in range(1, cfg.train.inner_steps + 1):
        grads = []
        for r, rep in enumerate(replicas):
            x, y = sample_batch(ds, rep.shard, cfg.train.batch_size, rep.batch_rng)
            loss, grad = model.loss_and_grad(theta, x, y)
            losses_per_replica[r].append(loss)
            grads.append(grad)
        g = clip_grad_norm(mean_of(grads), cfg.inner.clip_norm)
        theta, adam = adamw_step(theta, g, adam, lr_at(schedule, step_offset + h))
    for rep in replicas:
        rep.theta = theta.copy()
    replicas[0].adam = adam
    return losses_per_replica, [np.zeros_like(theta)] * len(replicas)
