"""Experiment configuration: flat `section.key = value` text files.

Unknown keys are hard errors so typos cannot silently fall back to defaults.
`#` starts a comment; blank lines are skipped; later duplicates of a key are
errors. Paths are resolved relative to the config file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from typing import Optional, Tuple

from .errors import ConfigError

DATASET_KINDS = ("blobs", "rings", "csv", "idx")
OBJECTIVE_KINDS = ("cross-entropy", "label-variation", "cross-entropy+regularizer", "distill")
SIMILARITY_CHOICES = ("auto", "cosine", "gaussian")
LAYOUT_CHOICES = ("auto", "simplex", "random")


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw: str) -> Tuple[int, ...]:
    return tuple(int(tok.strip()) for tok in raw.split(",") if tok.strip())


def _parse_pairs(raw: str) -> Tuple[Tuple[int, int], ...]:
    pairs = []
    for tok in raw.split(","):
        tok = tok.strip()
        if not tok:
            continue
        left, sep, right = tok.partition(":")
        if not sep:
            raise ValueError(f"pair {tok!r} must look like teacher:student")
        pairs.append((int(left), int(right)))
    return tuple(pairs)


def _parse_bandwidth(raw: str):
    if raw.strip() == "median":
        return "median"
    return float(raw)


@dataclass
class ExperimentConfig:
    """Typed view of one config file, defaults applied."""

    # dataset
    dataset_kind: str = "blobs"
    classes: int = 4
    per_class: int = 50
    test_per_class: Optional[int] = None
    dim: int = 3
    separation: float = 4.0
    layout: str = "auto"
    noise: float = 0.1
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    label_column: str = "label"
    labels_path: Optional[str] = None
    test_labels_path: Optional[str] = None
    test_fraction: float = 0.25
    # model
    hidden: Tuple[int, ...] = (32, 32)
    output_dim: Optional[int] = None
    # objective
    objective_kind: str = "cross-entropy"
    lambda_kd: float = 1.0
    gamma: float = 1.0
    adversarial_train: bool = False
    train_epsilon_scale: float = 0.3
    # teacher (distill only)
    teacher_weights: Optional[str] = None
    teacher_pairs: Optional[Tuple[Tuple[int, int], ...]] = None
    report_baseline: bool = False
    # graph
    graph_k: int = 5
    graph_similarity: str = "auto"
    graph_normalize: Optional[bool] = None  # objective-specific default when unset
    graph_bandwidth: object = "median"
    # optimizer
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    lr_decay: bool = False
    # run
    seed: int = 0
    out_dir: Optional[str] = None
    # evaluate
    eval_weights: Optional[str] = None
    eval_fgsm: bool = True
    eval_epsilon_scale: float = 0.3
    knn_k: int = 15
    baseline_weights: Optional[str] = None
    # graph-inspect
    inspect_weights: Optional[str] = None
    sample_size: int = 20
    interclass_only: bool = False

    raw_text: str = field(default="", repr=False)

    def resolved_normalize(self) -> bool:
        """Graph normalization default: on for distillation (scale-free
        comparison of teacher and student), off elsewhere (label variation
        bounds need raw weights)."""
        if self.graph_normalize is not None:
            return self.graph_normalize
        return self.objective_kind == "distill"


# key -> (attribute, converter, human-readable type name)
_KEYS = {
    "dataset.kind": ("dataset_kind", str, "one of " + "|".join(DATASET_KINDS)),
    "dataset.classes": ("classes", int, "int"),
    "dataset.per_class": ("per_class", int, "int"),
    "dataset.test_per_class": ("test_per_class", int, "int"),
    "dataset.dim": ("dim", int, "int"),
    "dataset.separation": ("separation", float, "float"),
    "dataset.layout": ("layout", str, "one of " + "|".join(LAYOUT_CHOICES)),
    "dataset.noise": ("noise", float, "float"),
    "dataset.train_path": ("train_path", str, "path"),
    "dataset.test_path": ("test_path", str, "path"),
    "dataset.label_column": ("label_column", str, "string"),
    "dataset.labels_path": ("labels_path", str, "path"),
    "dataset.test_labels_path": ("test_labels_path", str, "path"),
    "dataset.test_fraction": ("test_fraction", float, "float in (0,1)"),
    "model.hidden": ("hidden", _parse_int_list, "comma-separated ints"),
    "model.output_dim": ("output_dim", int, "int"),
    "objective.kind": ("objective_kind", str, "one of " + "|".join(OBJECTIVE_KINDS)),
    "objective.lambda_kd": ("lambda_kd", float, "float >= 0"),
    "objective.gamma": ("gamma", float, "float >= 0"),
    "objective.adversarial_train": ("adversarial_train", _parse_bool, "bool"),
    "objective.epsilon_scale": ("train_epsilon_scale", float, "float >= 0"),
    "teacher.weights": ("teacher_weights", str, "path"),
    "teacher.pairs": ("teacher_pairs", _parse_pairs, "t:s pairs, comma-separated"),
    "teacher.report_baseline": ("report_baseline", _parse_bool, "bool"),
    "graph.k": ("graph_k", int, "int >= 1"),
    "graph.similarity": ("graph_similarity", str, "one of " + "|".join(SIMILARITY_CHOICES)),
    "graph.normalize": ("graph_normalize", _parse_bool, "bool"),
    "graph.bandwidth": ("graph_bandwidth", _parse_bandwidth, "'median' or float > 0"),
    "optimizer.learning_rate": ("learning_rate", float, "float >= 0"),
    "optimizer.epochs": ("epochs", int, "int >= 1"),
    "optimizer.batch_size": ("batch_size", int, "int >= 2"),
    "optimizer.lr_decay": ("lr_decay", _parse_bool, "bool"),
    "run.seed": ("seed", int, "int"),
    "run.out": ("out_dir", str, "path"),
    "eval.weights": ("eval_weights", str, "path"),
    "eval.fgsm": ("eval_fgsm", _parse_bool, "bool"),
    "eval.epsilon_scale": ("eval_epsilon_scale", float, "float >= 0"),
    "eval.knn_k": ("knn_k", int, "int >= 1"),
    "eval.baseline_weights": ("baseline_weights", str, "path"),
    "inspect.weights": ("inspect_weights", str, "path"),
    "inspect.sample_size": ("sample_size", int, "int >= 4"),
    "inspect.interclass_only": ("interclass_only", _parse_bool, "bool"),
}

_PATH_ATTRS = (
    "train_path",
    "test_path",
    "labels_path",
    "test_labels_path",
    "teacher_weights",
    "out_dir",
    "eval_weights",
    "baseline_weights",
    "inspect_weights",
)


def parse_config_text(text: str) -> dict:
    """Raw key -> string values; syntax and unknown-key errors carry line numbers."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        values[key] = value
    return values


def build_config(raw: dict, base_dir: str = ".", raw_text: str = "") -> ExperimentConfig:
    cfg = ExperimentConfig(raw_text=raw_text)
    for key, value in raw.items():
        attr, convert, typename = _KEYS[key]
        try:
            setattr(cfg, attr, convert(value))
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{key}: cannot parse {value!r} as {typename} ({e})") from None
    for attr in _PATH_ATTRS:
        value = getattr(cfg, attr)
        if value is not None and not os.path.isabs(value):
            setattr(cfg, attr, os.path.normpath(os.path.join(base_dir, value)))
    _validate(cfg)
    return cfg


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _validate(cfg: ExperimentConfig) -> None:
    _require(cfg.dataset_kind in DATASET_KINDS, f"dataset.kind must be one of {DATASET_KINDS}")
    _require(cfg.objective_kind in OBJECTIVE_KINDS, f"objective.kind must be one of {OBJECTIVE_KINDS}")
    _require(cfg.graph_similarity in SIMILARITY_CHOICES, f"graph.similarity must be one of {SIMILARITY_CHOICES}")
    _require(cfg.layout in LAYOUT_CHOICES, f"dataset.layout must be one of {LAYOUT_CHOICES}")
    _require(cfg.classes >= 2, "dataset.classes must be >= 2")
    _require(cfg.per_class >= 1, "dataset.per_class must be >= 1")
    _require(cfg.test_per_class is None or cfg.test_per_class >= 1, "dataset.test_per_class must be >= 1")
    _require(cfg.dim >= 2, "dataset.dim must be >= 2")
    _require(cfg.separation >= 0, "dataset.separation must be >= 0")
    _require(cfg.noise >= 0, "dataset.noise must be >= 0")
    _require(0.0 < cfg.test_fraction < 1.0, "dataset.test_fraction must be in (0,1)")
    _require(len(cfg.hidden) >= 1 and min(cfg.hidden) >= 1, "model.hidden needs positive widths")
    _require(cfg.output_dim is None or cfg.output_dim >= 2, "model.output_dim must be >= 2")
    _require(cfg.lambda_kd >= 0, "objective.lambda_kd must be >= 0")
    _require(cfg.gamma >= 0, "objective.gamma must be >= 0")
    _require(cfg.train_epsilon_scale >= 0, "objective.epsilon_scale must be >= 0")
    _require(cfg.graph_k >= 1, "graph.k must be >= 1")
    if cfg.graph_bandwidth != "median":
        _require(float(cfg.graph_bandwidth) > 0, "graph.bandwidth must be positive")
    _require(cfg.learning_rate >= 0, "optimizer.learning_rate must be >= 0")
    _require(cfg.epochs >= 1, "optimizer.epochs must be >= 1")
    _require(cfg.batch_size >= 2, "optimizer.batch_size must be >= 2")
    _require(cfg.batch_size > cfg.graph_k, "optimizer.batch_size must exceed graph.k")
    _require(cfg.eval_epsilon_scale >= 0, "eval.epsilon_scale must be >= 0")
    _require(cfg.knn_k >= 1, "eval.knn_k must be >= 1")
    _require(cfg.sample_size >= 4, "inspect.sample_size must be >= 4")
    if cfg.dataset_kind == "csv":
        _require(cfg.train_path is not None, "dataset.kind = csv requires dataset.train_path")
    if cfg.dataset_kind == "idx":
        _require(
            cfg.train_path is not None and cfg.labels_path is not None,
            "dataset.kind = idx requires dataset.train_path and dataset.labels_path",
        )
    if cfg.objective_kind == "distill":
        _require(cfg.teacher_weights is not None, "objective.kind = distill requires teacher.weights")


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse and validate a config file; `overrides` are raw key/value
    strings applied on top (the CLI --seed/--out flags)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    raw = parse_config_text(text)
    for key, value in (overrides or {}).items():
        if key not in _KEYS:
            raise ConfigError(f"unknown override key {key!r}")
        raw[key] = str(value)
    return build_config(raw, base_dir=os.path.dirname(os.path.abspath(path)), raw_text=text)


def require_file(cfg_attr_value: Optional[str], key: str) -> str:
    """Presence + existence check for a path the current command needs."""
    _require(cfg_attr_value is not None, f"missing required config key {key}")
    if not os.path.exists(cfg_attr_value):
        raise ConfigError(f"{key}: file not found: {cfg_attr_value}")
    return cfg_attr_value


def config_field_names() -> Tuple[str, ...]:
    return tuple(f.name for f in fields(ExperimentConfig))
