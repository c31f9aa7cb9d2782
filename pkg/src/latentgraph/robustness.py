"""Robustness evaluation: FGSM attacks, feature-space corruptions, relative MCE.

Corruptions are network-agnostic transformations of the test features:
additive gaussian noise, additive uniform noise (matched variance), and
feature dropout, each at three severities scaled by the global std of the
training features. Relative MCE compares summed corruption errors against a
baseline model evaluated on the same corrupted inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .data import Dataset, feature_std
from .errors import DegenerateInputError, UsageError
from .models import Mlp
from .objectives import cross_entropy_loss
from .tensor import Tape, Tensor

CORRUPTION_KINDS = ("gaussian", "uniform", "dropout")
NOISE_SCALES = (0.1, 0.2, 0.4)  # times feature std, severities 1..3
DROPOUT_RATES = (0.05, 0.10, 0.20)
SEVERITIES = (0, 1, 2, 3)

PredictFn = Callable[[np.ndarray], np.ndarray]


def fgsm_attack(
    net: Mlp,
    batch: np.ndarray,
    labels: np.ndarray,
    epsilon: float,
    clip_range: Tuple[np.ndarray, np.ndarray],
) -> np.ndarray:
    """One-step sign-of-gradient perturbation of the batch, clipped to the
    per-feature data box. sign(0) = 0, so coordinates the loss ignores stay
    put; epsilon 0 returns the batch unchanged (up to the clip)."""
    if epsilon < 0:
        raise UsageError(f"epsilon must be >= 0, got {epsilon}")
    batch = np.asarray(batch, dtype=np.float64)
    with Tape() as tape:
        X = Tensor(batch)
        loss = cross_entropy_loss(net.forward(X), labels)
        grad = tape.backward(loss)[X]
    lo, hi = clip_range
    return np.clip(batch + epsilon * np.sign(grad), lo, hi)


def fgsm_error(net: Mlp, dataset: Dataset, epsilon_scale: float, predict: PredictFn = None) -> float:
    """Test error rate under FGSM at epsilon = epsilon_scale * train std."""
    epsilon = epsilon_scale * feature_std(dataset.train_x)
    adv = fgsm_attack(net, dataset.test_x, dataset.test_y, epsilon, dataset.feature_ranges())
    if predict is None:
        from .models import predict_classes

        predict = lambda X: predict_classes(net, X)
    return float(np.mean(predict(adv) != dataset.test_y))


# ---------------------------------------------------------------------------
# corruption suite


@dataclass(frozen=True)
class CorruptionTable:
    """Error rates per corruption kind (rows) and severity (columns);
    severity 0 is the clean test error, repeated on every row."""

    kinds: Tuple[str, ...]
    severities: Tuple[int, ...]
    errors: np.ndarray  # kinds x severities

    def row(self, kind: str) -> np.ndarray:
        return self.errors[self.kinds.index(kind)]


def corrupt_features(
    X: np.ndarray,
    kind: str,
    severity: int,
    scale: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Apply one corruption at severity 1..3 (0 = identity)."""
    if kind not in CORRUPTION_KINDS:
        raise UsageError(f"unknown corruption {kind!r}")
    if severity not in SEVERITIES:
        raise UsageError(f"severity must be in {SEVERITIES}, got {severity}")
    if severity == 0:
        return X.copy()
    level = severity - 1
    if kind == "gaussian":
        sigma = NOISE_SCALES[level] * scale
        return X + sigma * rng.standard_normal(X.shape)
    if kind == "uniform":
        half_width = NOISE_SCALES[level] * scale * np.sqrt(3.0)  # variance-matched
        return X + rng.uniform(-half_width, half_width, size=X.shape)
    keep = rng.random(X.shape) >= DROPOUT_RATES[level]
    return X * keep


def generate_corruptions(
    dataset: Dataset,
    rng: np.random.Generator,
    kinds: Sequence[str] = CORRUPTION_KINDS,
) -> List[Tuple[str, int, np.ndarray]]:
    """All (kind, severity, corrupted test features) in a fixed order, from
    one RNG stream; evaluate several models on the same list so relative
    comparisons see identical inputs."""
    if not kinds:
        raise UsageError("corruption suite is empty")
    scale = feature_std(dataset.train_x)
    out = []
    for kind in kinds:
        for severity in SEVERITIES:
            out.append((kind, severity, corrupt_features(dataset.test_x, kind, severity, scale, rng)))
    return out


def corruption_table(
    predict: PredictFn,
    corrupted: List[Tuple[str, int, np.ndarray]],
    labels: np.ndarray,
) -> CorruptionTable:
    kinds = tuple(dict.fromkeys(kind for kind, _, _ in corrupted))
    errors = np.zeros((len(kinds), len(SEVERITIES)))
    for kind, severity, X in corrupted:
        errors[kinds.index(kind), SEVERITIES.index(severity)] = float(np.mean(predict(X) != labels))
    return CorruptionTable(kinds=kinds, severities=SEVERITIES, errors=errors)


def corruption_eval(
    predict: PredictFn,
    dataset: Dataset,
    rng: np.random.Generator,
    kinds: Sequence[str] = CORRUPTION_KINDS,
) -> CorruptionTable:
    """Generate the suite and evaluate one predictor on it."""
    return corruption_table(predict, generate_corruptions(dataset, rng, kinds), dataset.test_y)


def relative_mce(model: CorruptionTable, baseline: CorruptionTable) -> float:
    """Mean over corruption kinds of summed severity>=1 error ratios, x100.

    100 means matching the baseline exactly; below 100 means more robust.
    The clean column is excluded from both sums.
    """
    if model.kinds != baseline.kinds or model.severities != baseline.severities:
        raise UsageError("corruption tables cover different suites")
    ratios = []
    for i, kind in enumerate(model.kinds):
        cols = [j for j, s in enumerate(model.severities) if s >= 1]
        num = float(model.errors[i, cols].sum())
        den = float(baseline.errors[i, cols].sum())
        if den <= 0.0:
            raise DegenerateInputError(f"baseline error for {kind!r} is zero; ratio undefined")
        ratios.append(num / den)
    return 100.0 * float(np.mean(ratios))


def write_corruption_table(table: CorruptionTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("corruption\t" + "\t".join(f"severity{s}" for s in table.severities) + "\n")
        for i, kind in enumerate(table.kinds):
            fh.write(kind + "\t" + "\t".join(f"{v:.9g}" for v in table.errors[i]) + "\n")


def read_corruption_table(path) -> CorruptionTable:
    from .errors import FormatError

    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise FormatError(f"cannot read corruption table {path}: {e}") from e
    if not lines or not lines[0].startswith("corruption\t"):
        raise FormatError(f"{path}:1: expected 'corruption' header")
    header = lines[0].split("\t")[1:]
    try:
        severities = tuple(int(col.removeprefix("severity")) for col in header)
    except ValueError:
        raise FormatError(f"{path}:1: malformed severity columns {header}") from None
    kinds, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(severities) + 1:
            raise FormatError(f"{path}:{lineno}: expected {len(severities) + 1} columns")
        kinds.append(parts[0])
        try:
            rows.append([float(v) for v in parts[1:]])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric error rate") from None
    if not kinds:
        raise FormatError(f"{path}: no corruption rows")
    return CorruptionTable(kinds=tuple(kinds), severities=severities, errors=np.array(rows))
