"""Ablation suites: small fixed-seed grids that reproduce the directional
findings (selection rule, quantization depth, outer-momentum interaction,
chunking/DCT) at desk scale, with machine-checkable ordering verdicts."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .algorithms import run_outer_loop
from .config import RunConfig, from_dict

DEFAULT_SEEDS = (0, 1, 2)

# densities on a 256-entry chunk: 4/256, 8/256, 16/256
ABLATION_DENSITIES = (0.015625, 0.03125, 0.0625)


def toy_base_config() -> RunConfig:
    """Shared desk-scale setup for ablation arms (seconds per run)."""
    return from_dict(
        {
            "name": "ablation",
            "seed": 0,
            "dtype": "float32",
            "model": {"input_dim": 32, "hidden_dims": [128, 128], "n_classes": 8},
            "data": {"n_samples": 4096, "teacher_depth": 2},
            "train": {"replicas": 4, "inner_steps": 5, "outer_steps": 60, "batch_size": 32},
            "inner": {"lr": 2e-3, "warmup_steps": 20},
            "algo": {"name": "sparseloco"},
            "compression": {"chunk_size": 256, "density": 0.03125, "bits": 32},
        }
    )


def _arm(base: RunConfig, seed: int, **overrides) -> RunConfig:
    cfg = copy.deepcopy(base)
    cfg.seed = seed
    for path, value in overrides.items():
        section, _, key = path.partition(".")
        if key:
            setattr(getattr(cfg, section), key, value)
        else:
            setattr(cfg, section, value)
    return cfg


def final_loss(cfg: RunConfig) -> float:
    return run_outer_loop(cfg).final_loss


@dataclass
class SuiteResult:
    suite: str
    arms: dict = field(default_factory=dict)  # label -> list of per-seed losses
    verdicts: list = field(default_factory=list)  # (description, passed, detail)

    def mean(self, label: str) -> float:
        losses = self.arms[label]
        return sum(losses) / len(losses)

    @property
    def all_passed(self) -> bool:
        return all(ok for _, ok, _ in self.verdicts)

    def lines(self) -> list:
        out = [f"suite {self.suite}"]
        for label, losses in sorted(self.arms.items()):
            per_seed = ", ".join(f"{x:.4f}" for x in losses)
            out.append(f"  arm {label:42s} mean={self.mean(label):.4f}  [{per_seed}]")
        for desc, ok, detail in self.verdicts:
            out.append(f"  {'PASS' if ok else 'FAIL'}  {desc}  ({detail})")
        return out


def _run_grid(result: SuiteResult, arms: dict, seeds) -> None:
    for label, cfg_fn in arms.items():
        result.arms[label] = [final_loss(cfg_fn(seed)) for seed in seeds]


def run_randk_vs_topk(seeds=DEFAULT_SEEDS, densities=ABLATION_DENSITIES) -> SuiteResult:
    base = toy_base_config()
    res = SuiteResult("randk-vs-topk")
    arms = {}
    for d in densities:
        for sel in ("topk", "randk"):
            arms[f"{sel}@{100 * d:.2f}%"] = (
                lambda seed, d=d, sel=sel: _arm(
                    base, seed, **{"compression.density": d, "compression.selection": sel}
                )
            )
    _run_grid(res, arms, seeds)
    for d in densities:
        t, r = res.mean(f"topk@{100 * d:.2f}%"), res.mean(f"randk@{100 * d:.2f}%")
        res.verdicts.append(
            (f"top-k beats random-k at {100 * d:.2f}%", t < r, f"{t:.4f} < {r:.4f}")
        )
    return res


def run_quant_bits(seeds=DEFAULT_SEEDS, bits=(1, 2, 3, 4, 32)) -> SuiteResult:
    base = toy_base_config()
    res = SuiteResult("quant-bits")
    arms = {
        f"bits={b}": (lambda seed, b=b: _arm(base, seed, **{"compression.bits": b}))
        for b in bits
    }
    _run_grid(res, arms, seeds)
    b1, b2, b32 = res.mean("bits=1"), res.mean("bits=2"), res.mean("bits=32")
    res.verdicts.append(
        ("1-bit degrades by >= 0.1 nats over 2-bit", b1 - b2 >= 0.1, f"{b1:.4f} - {b2:.4f} = {b1 - b2:.4f}")
    )
    res.verdicts.append(
        ("2-bit within 0.02 nats of full precision", abs(b2 - b32) <= 0.02, f"|{b2:.4f} - {b32:.4f}| = {abs(b2 - b32):.4f}")
    )
    return res


def run_nesterov_ef(seeds=DEFAULT_SEEDS) -> SuiteResult:
    base = toy_base_config()
    res = SuiteResult("nesterov-ef")
    arms = {
        "sparseloco": lambda seed: _arm(base, seed),
        "sparseloco+nesterov": lambda seed: _arm(base, seed, **{"algo.name": "sparseloco_nesterov"}),
    }
    _run_grid(res, arms, seeds)
    plain, nest = res.mean("sparseloco"), res.mean("sparseloco+nesterov")
    res.verdicts.append(
        ("adding Nesterov outer momentum hurts at high sparsity", nest > plain, f"{nest:.4f} > {plain:.4f}")
    )
    return res


def run_outer_momentum(seeds=DEFAULT_SEEDS) -> SuiteResult:
    base = toy_base_config()
    res = SuiteResult("outer-momentum")
    arms = {
        "diloco": lambda seed: _arm(base, seed, **{"algo.name": "diloco"}),
        "diloco-no-momentum": lambda seed: _arm(
            base, seed, **{"algo.name": "diloco", "algo.beta": 0.0, "algo.outer_lr": 1.0}
        ),
    }
    _run_grid(res, arms, seeds)
    with_m, without = res.mean("diloco"), res.mean("diloco-no-momentum")
    res.verdicts.append(
        ("outer momentum improves the local-update baseline", with_m < without, f"{with_m:.4f} < {without:.4f}")
    )
    return res


def run_chunking_dct(seeds=DEFAULT_SEEDS) -> SuiteResult:
    """Chunking on/off x DCT on/off, for both the per-step sign-descent method
    (inner_steps = 1) and the multi-step method. Report-only grid."""
    base = toy_base_config()
    res = SuiteResult("chunking-dct")
    from .config import ALGO_DEFAULTS

    demo = ALGO_DEFAULTS["demo_lite"]
    arms = {}
    for chunking in (True, False):
        for dct in (True, False):
            tag = f"chunk={'on' if chunking else 'off'},dct={'on' if dct else 'off'}"
            arms[f"sparseloco,H>1,{tag}"] = (
                lambda seed, c=chunking, d=dct: _arm(
                    base, seed, **{"compression.chunking": c, "compression.use_dct": d}
                )
            )
            arms[f"demo_lite,H=1,{tag}"] = (
                lambda seed, c=chunking, d=dct: _arm(
                    base,
                    seed,
                    **{
                        "algo.name": "demo_lite",
                        "algo.outer_lr": demo["outer_lr"],
                        "algo.beta": demo["beta"],
                        "train.inner_steps": 1,
                        "train.outer_steps": 300,
                        "compression.chunking": c,
                        "compression.use_dct": d,
                    },
                )
            )
    _run_grid(res, arms, seeds)
    res.verdicts.append(("grid ran to completion", True, f"{len(arms)} arms"))
    return res


SUITES = {
    "randk-vs-topk": run_randk_vs_topk,
    "quant-bits": run_quant_bits,
    "nesterov-ef": run_nesterov_ef,
    "outer-momentum": run_outer_momentum,
    "chunking-dct": run_chunking_dct,
}


def run_suite(name: str, seeds=DEFAULT_SEEDS) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown ablation suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](seeds=seeds)
