"""Command-line surface: train, comm-report, codec-bench, ablate, wire dump|parse.

Exit codes: 0 success, 2 config error, 3 numeric failure (NaN detected).
The SPARSELOCO_THREADS environment variable overrides train.threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import comm, compress, config, index_codec as ic, wire
from .algorithms import NumericError, run_outer_loop
from .sweeps import DEFAULT_SEEDS, SUITES, run_suite
from .vectors import chunk_layout, make_rng

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _cmd_train(args) -> int:
    try:
        cfg = config.load(args.config)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except config.ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    env_threads = os.environ.get("SPARSELOCO_THREADS")
    if env_threads:
        cfg.train.threads = int(env_threads)
    out_dir = Path(args.out_dir or cfg.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        log = run_outer_loop(cfg)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    csv_path = out_dir / f"{cfg.name}_metrics.csv"
    with open(csv_path, "w", encoding="utf-8") as f:
        log.to_csv(f)

    summary = log.summary()
    msg_bytes = log.rows[-1].bytes_sent_per_worker
    syncs = len(log.rows)
    R = cfg.train.replicas
    dense_bytes = 4 * _param_count(cfg)
    per_topology = {}
    if R >= 2:
        per_topology["ring_all_reduce_total"] = comm.total_volume(
            comm.outbound_bytes_per_sync(comm.RING_ALL_REDUCE, dense_bytes, msg_bytes, R), syncs
        )
        per_topology["ring_all_gather_total"] = comm.total_volume(
            comm.outbound_bytes_per_sync(comm.RING_ALL_GATHER, dense_bytes, msg_bytes, R), syncs
        )
    per_topology["parameter_server_upload_total"] = comm.total_volume(msg_bytes, syncs)
    summary["volume_bytes_per_topology"] = per_topology
    summary["config"] = config.to_dict(cfg)
    json_path = out_dir / f"{cfg.name}_summary.json"
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"final_loss={log.final_loss:.6f}  rows={syncs}  wrote {csv_path} {json_path}")
    return EXIT_OK


def _param_count(cfg: config.RunConfig) -> int:
    from .model import param_count

    return param_count(cfg.model.layer_dims)


def _cmd_comm_report(args) -> int:
    rows = comm.report_table(args.params, args.total_steps, args.replicas)
    cols = [
        ("method", "{:<12}"),
        ("density_pct", "{:>8.2f}"),
        ("quant_bits", "{:>5}"),
        ("pseudograd_mb", "{:>12.2f}"),
        ("pseudograd_gib", "{:>9.3f}"),
        ("syncs", "{:>6}"),
        ("ring_total_gb", "{:>14.2f}"),
        ("ps_upload_total_gb", "{:>14.2f}"),
        ("ps_updown_total_gb", "{:>14.2f}"),
        ("note", "  {}"),
    ]
    header = " ".join(name for name, _ in cols)
    print(header)
    for r in rows:
        print(" ".join(fmt.format(r[name]) for name, fmt in cols))
    if args.out:
        import csv as _csv

        with open(args.out, "w", encoding="utf-8", newline="") as f:
            w = _csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_codec_bench(args) -> int:
    ks = [int(x) for x in args.k.split(",")]
    C = args.chunk_size
    print(f"chunk_size={C}")
    print(f"{'k':>6} {'limit':>8} {'enumerative':>12} {'naive':>8}")
    for k in ks:
        lim = ic.bits_per_value(C, k, "limit")
        enum = ic.bits_per_value(C, k, "enumerative")
        naive = ic.bits_per_value(C, k, "naive")
        print(f"{k:>6} {lim:>8.4f} {enum:>12.4f} {naive:>8.1f}")
    failures = _codec_fuzz(args.fuzz)
    print(f"round-trip fuzz: {args.fuzz} cases, {failures} failures "
          f"[{'PASS' if failures == 0 else 'FAIL'}]")
    return EXIT_OK if failures == 0 else 1


def _codec_fuzz(cases: int, seed: int = 1234) -> int:
    rng = make_rng(seed, 77)
    failures = 0
    # deterministic edge cases plus random small/large chunks
    grid = [(1, 0), (1, 1), (2, 1), (5, 2), (12, 12), (4096, 0), (4096, 256)]
    for i in range(cases):
        if i < len(grid):
            C, k = grid[i]
        elif i % 50 == 0:
            C = int(rng.integers(1024, 4097))
            k = int(rng.integers(0, min(C, 256) + 1))
        else:
            C = int(rng.integers(1, 65))
            k = int(rng.integers(0, C + 1))
        idx = sorted(int(x) for x in rng.choice(C, size=k, replace=False)) if k else []
        for codec in ("naive", "enumerative"):
            w = ic.BitWriter()
            ic.encode_indices(C, idx, codec, w)
            r = ic.BitReader(w.getvalue(), w.bit_len)
            if ic.decode_indices(C, k, codec, r) != idx:
                failures += 1
    return failures


def _cmd_ablate(args) -> int:
    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join(sorted(SUITES))}",
              file=sys.stderr)
        return EXIT_CONFIG
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else DEFAULT_SEEDS
    try:
        result = run_suite(args.suite, seeds=seeds)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for line in result.lines():
        print(line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write("\n".join(result.lines()) + "\n")
    return EXIT_OK if result.all_passed else 1


def _cmd_wire_dump(args) -> int:
    rng = make_rng(args.seed, 7)
    v = rng.standard_normal(args.length).astype(np.float32)
    layout = chunk_layout(args.length, args.chunk_size)
    q, _ = compress.compress_vector(v, layout, args.k, args.bits)
    data = wire.serialize(q, args.codec)
    predicted = wire.message_size_bytes(args.length, args.chunk_size, args.k, args.bits, args.codec)
    Path(args.out).write_bytes(data)
    print(f"wrote {args.out}: {len(data)} bytes (predicted {predicted}, "
          f"{'match' if predicted == len(data) else 'MISMATCH'})")
    print(f"header: len={args.length} chunk_size={args.chunk_size} k={args.k} "
          f"bits={args.bits} codec={args.codec} chunks={layout.num_chunks}")
    return EXIT_OK


def _cmd_wire_parse(args) -> int:
    data = Path(args.path).read_bytes()
    q, codec = wire.deserialize(data)
    dense = compress.densify(q)
    print(f"{args.path}: {len(data)} bytes")
    print(f"header: param_len={q.layout.length} chunk_size={q.layout.chunk_size} "
          f"k={q.k} bits={q.bits} codec={codec} num_chunks={q.layout.num_chunks}")
    nz = int(np.count_nonzero(dense))
    print(f"dequantized sparse vector: {nz} nonzeros, l2={float(np.sqrt(np.dot(dense, dense))):.6g}")
    show = min(3, q.layout.num_chunks if q.k else 0)
    for c in range(show):
        print(f"chunk {c}: scale={q.scales[c]:.6g} indices={list(q.indices[c][:8])}"
              f"{'...' if len(q.indices[c]) > 8 else ''}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparseloco", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="run one experiment from a JSON config")
    t.add_argument("config")
    t.add_argument("--out-dir", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(fn=_cmd_train)

    c = sub.add_parser("comm-report", help="communication-volume table")
    c.add_argument("--params", type=int, default=comm.REFERENCE_PARAM_COUNT)
    c.add_argument("--total-steps", type=int, default=comm.REFERENCE_TOTAL_STEPS)
    c.add_argument("--replicas", type=int, default=8)
    c.add_argument("--out", default=None)
    c.set_defaults(fn=_cmd_comm_report)

    b = sub.add_parser("codec-bench", help="index-codec rates and round-trip fuzz")
    b.add_argument("--chunk-size", type=int, default=4096)
    b.add_argument("--k", default="32,128,256")
    b.add_argument("--fuzz", type=int, default=10000)
    b.set_defaults(fn=_cmd_codec_bench)

    a = sub.add_parser("ablate", help="run a named ablation suite")
    a.add_argument("suite", help=", ".join(sorted(SUITES)))
    a.add_argument("--seeds", default=None, help="comma-separated, default 0,1,2")
    a.add_argument("--out", default=None)
    a.set_defaults(fn=_cmd_ablate)

    w = sub.add_parser("wire", help="inspect the sparse message format")
    wsub = w.add_subparsers(dest="wire_cmd", required=True)
    wd = wsub.add_parser("dump", help="compress a seeded random vector to a message file")
    wd.add_argument("--length", type=int, default=100_000)
    wd.add_argument("--chunk-size", type=int, default=4096)
    wd.add_argument("--k", type=int, default=128)
    wd.add_argument("--bits", type=int, default=2)
    wd.add_argument("--codec", default="enumerative", choices=["naive", "enumerative"])
    wd.add_argument("--seed", type=int, default=0)
    wd.add_argument("--out", default="message.bin")
    wd.set_defaults(fn=_cmd_wire_dump)
    wp = wsub.add_parser("parse", help="decode and summarize a message file")
    wp.add_argument("path")
    wp.set_defaults(fn=_cmd_wire_parse)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except config.ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
