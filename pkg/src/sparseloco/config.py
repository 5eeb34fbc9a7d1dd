"""Run configuration: dataclasses, per-algorithm defaults, JSON round-trip,
and field-level validation.

Defaults follow the tuned reference settings for each algorithm family;
everything is overridable from the config file.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .compress import VALID_BITS

ALGORITHMS = (
    "adamw",
    "diloco",
    "diloco_lom",
    "diloco_lom_subk",
    "sparseloco",
    "sparseloco_nesterov",
    "demo_lite",
)
SPARSE_ALGOS = ("sparseloco", "sparseloco_nesterov", "demo_lite")

# (inner lr, outer lr, momentum / error-feedback decay) per algorithm
ALGO_DEFAULTS = {
    "adamw": dict(inner_lr=3e-3, outer_lr=1.0, beta=0.0),
    "diloco": dict(inner_lr=8e-4, outer_lr=0.6, beta=0.9),
    "diloco_lom": dict(inner_lr=8e-4, outer_lr=0.6, beta=0.9),
    "diloco_lom_subk": dict(inner_lr=8e-4, outer_lr=0.6, beta=0.9),
    "sparseloco": dict(inner_lr=1e-3, outer_lr=1.0, beta=0.95),
    "sparseloco_nesterov": dict(inner_lr=1e-3, outer_lr=1.0, beta=0.95),
    "demo_lite": dict(inner_lr=1e-3, outer_lr=1e-3, beta=0.999),
}


class ConfigError(ValueError):
    """Invalid run configuration; carries field-level diagnostics."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass
class ModelConfig:
    input_dim: int = 64
    hidden_dims: list = field(default_factory=lambda: [512, 512])
    n_classes: int = 16

    @property
    def layer_dims(self) -> list:
        return [self.input_dim, *self.hidden_dims, self.n_classes]


@dataclass
class DataConfig:
    seed: int | None = None  # defaults to the run seed
    n_samples: int = 4096
    teacher_depth: int = 2


@dataclass
class TrainConfig:
    replicas: int = 8
    inner_steps: int = 15
    outer_steps: int = 133
    batch_size: int = 32
    threads: int = 1


@dataclass
class InnerOptConfig:
    lr: float | None = None  # algorithm default when omitted
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.1
    clip_norm: float = 1.0
    warmup_steps: int = 50
    min_lr_ratio: float = 0.1


@dataclass
class AlgoConfig:
    name: str = "sparseloco"
    outer_lr: float | None = None
    beta: float | None = None
    nesterov_beta: float = 0.9
    subk_fraction: float = 0.25


@dataclass
class CompressionConfig:
    chunk_size: int = 4096
    density: float | None = None
    k: int | None = None
    bits: int = 2
    codec: str = "enumerative"
    selection: str = "topk"
    use_dct: bool = False
    chunking: bool = True


@dataclass
class RunConfig:
    name: str = "run"
    seed: int = 0
    dtype: str = "float32"
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    inner: InnerOptConfig = field(default_factory=InnerOptConfig)
    algo: AlgoConfig = field(default_factory=AlgoConfig)
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    out_dir: str | None = None

    @property
    def data_seed(self) -> int:
        return self.seed if self.data.seed is None else self.data.seed

    @property
    def total_inner_steps(self) -> int:
        return self.train.outer_steps * self.train.inner_steps


_SECTIONS = {
    "model": ModelConfig,
    "data": DataConfig,
    "train": TrainConfig,
    "inner": InnerOptConfig,
    "algo": AlgoConfig,
    "compression": CompressionConfig,
}


def _build_section(cls, raw: dict, path: str, errors: list):
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in raw.items():
        if key not in known:
            errors.append(f"{path}.{key}: unknown field")
            continue
        kwargs[key] = val
    try:
        return cls(**kwargs)
    except TypeError as exc:
        errors.append(f"{path}: {exc}")
        return cls()


def from_dict(raw: dict) -> RunConfig:
    """Build and validate a RunConfig from plain JSON data."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    top = {k: v for k, v in raw.items() if k not in _SECTIONS}
    cfg = _build_section(RunConfig, top, "<top>", errors)
    for name, cls in _SECTIONS.items():
        section = raw.get(name, {})
        if not isinstance(section, dict):
            errors.append(f"{name}: must be an object")
            section = {}
        setattr(cfg, name, _build_section(cls, section, name, errors))
    _apply_defaults(cfg)
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def _apply_defaults(cfg: RunConfig) -> None:
    defaults = ALGO_DEFAULTS.get(cfg.algo.name)
    if defaults is None:
        return
    if cfg.inner.lr is None:
        cfg.inner.lr = defaults["inner_lr"]
    if cfg.algo.outer_lr is None:
        cfg.algo.outer_lr = defaults["outer_lr"]
    if cfg.algo.beta is None:
        cfg.algo.beta = defaults["beta"]
    comp = cfg.compression
    if cfg.algo.name in SPARSE_ALGOS and comp.density is None and comp.k is None:
        comp.density = 0.03125


def resolve_k(comp: CompressionConfig, chunk_size: int) -> int:
    """k from density (k = round(density * chunk_size)), or the explicit k."""
    if comp.k is not None:
        return comp.k
    if comp.density is None:
        raise ConfigError(["compression.density: required when compression.k is not set"])
    return max(1, round(comp.density * chunk_size))


def validate(cfg: RunConfig) -> list:
    errors = []

    def check(ok, msg):
        if not ok:
            errors.append(msg)

    check(cfg.dtype in ("float32", "float64"), f"dtype: must be float32 or float64, got {cfg.dtype!r}")
    check(cfg.algo.name in ALGORITHMS, f"algo.name: unknown algorithm {cfg.algo.name!r}")
    check(cfg.model.input_dim > 0, "model.input_dim: must be positive")
    check(cfg.model.n_classes > 1, "model.n_classes: must be > 1")
    check(all(h > 0 for h in cfg.model.hidden_dims), "model.hidden_dims: must be positive")
    check(cfg.data.n_samples > 0, "data.n_samples: must be positive")
    check(cfg.data.teacher_depth > 0, "data.teacher_depth: must be positive")
    tr = cfg.train
    check(tr.replicas > 0, "train.replicas: must be positive")
    check(tr.inner_steps > 0, "train.inner_steps: must be positive")
    check(tr.outer_steps > 0, "train.outer_steps: must be positive")
    check(tr.batch_size > 0, "train.batch_size: must be positive")
    check(tr.threads > 0, "train.threads: must be positive")
    inner = cfg.inner
    check(inner.lr is not None and inner.lr > 0, "inner.lr: must be positive")
    check(0 < inner.beta1 < 1, "inner.beta1: must be in (0, 1)")
    check(0 < inner.beta2 < 1, "inner.beta2: must be in (0, 1)")
    check(inner.eps > 0, "inner.eps: must be positive")
    check(inner.weight_decay >= 0, "inner.weight_decay: must be >= 0")
    check(inner.clip_norm > 0, "inner.clip_norm: must be positive")
    check(inner.warmup_steps >= 0, "inner.warmup_steps: must be >= 0")
    check(
        inner.warmup_steps < tr.outer_steps * tr.inner_steps,
        "inner.warmup_steps: must be below total inner steps",
    )
    check(0 < inner.min_lr_ratio <= 1, "inner.min_lr_ratio: must be in (0, 1]")
    algo = cfg.algo
    check(algo.outer_lr is not None and algo.outer_lr > 0, "algo.outer_lr: required, must be positive")
    check(algo.beta is not None and 0 <= algo.beta < 1, "algo.beta: required, must be in [0, 1)")
    check(0 <= algo.nesterov_beta < 1, "algo.nesterov_beta: must be in [0, 1)")
    check(0 <= algo.subk_fraction <= 1, "algo.subk_fraction: must be in [0, 1]")
    if algo.name == "demo_lite":
        check(tr.inner_steps == 1, "train.inner_steps: demo_lite requires inner_steps == 1")
    comp = cfg.compression
    check(comp.chunk_size > 0, "compression.chunk_size: must be positive")
    check(comp.bits in VALID_BITS, f"compression.bits: must be one of {VALID_BITS}")
    check(comp.codec in ("naive", "enumerative"), "compression.codec: must be naive|enumerative")
    check(comp.selection in ("topk", "randk"), "compression.selection: must be topk|randk")
    if comp.density is not None:
        check(0 < comp.density <= 1, "compression.density: must be in (0, 1]")
    if comp.k is not None:
        check(comp.k >= 1, "compression.k: must be >= 1")
        if comp.chunking:
            check(comp.k <= comp.chunk_size, "compression.k: must be <= chunk_size")
    if comp.density is not None and comp.k is not None and comp.chunking:
        want = max(1, round(comp.density * comp.chunk_size))
        check(
            comp.k == want,
            f"compression.k: inconsistent with density (k={comp.k}, round(density*chunk_size)={want})",
        )
    if cfg.algo.name in SPARSE_ALGOS:
        check(
            comp.density is not None or comp.k is not None,
            "compression.density: required (or compression.k) for sparse algorithms",
        )
    return errors


def to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def to_json(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"


def from_json(text: str) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from exc
    return from_dict(raw)


def load(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return from_json(f.read())


def save(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(to_json(cfg))
