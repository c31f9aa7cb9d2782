"""Training objectives over latent geometry graphs.

All objectives return scalar tensors on the active tape. Graph-based terms
differentiate through retained similarity weights and degree normalization
only; edge selection and the median bandwidth are frozen constants (see the
graphs module). Finite-difference checks of these objectives must therefore
pin the bandwidth at its base-point value when probing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import tensor as tg
from .errors import DegenerateInputError, UsageError
from .graphs import (
    GraphParams,
    LabelIndicatorMatrix,
    LatentGraph,
    build_from_params,
    label_variation,
)
from .tensor import Tensor

EMBEDDING_GRAPH_DEFAULTS = GraphParams(k=5, similarity="gaussian", normalize=False)


@dataclass(frozen=True)
class ObjectiveWeights:
    """Scale factors for the auxiliary terms: lambda_kd for distillation,
    gamma for the smoothness regularizer. Zero disables a term."""

    lambda_kd: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("lambda_kd", "gamma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise UsageError(f"{name} must be finite and nonnegative, got {v}")


@dataclass(frozen=True)
class LayerPairing:
    """Which teacher block supervises which student block, as (teacher,
    student) block indices (1-based, matching trace positions)."""

    pairs: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        prev_t, prev_s = 0, 0
        for t, s in self.pairs:
            if t <= prev_t or s <= prev_s:
                raise UsageError(f"pairs must be strictly increasing block indices, got {self.pairs}")
            prev_t, prev_s = t, s

    @classmethod
    def default(cls, teacher_blocks: int, student_blocks: int) -> "LayerPairing":
        """Identity pairing on hidden blocks at equal depth; otherwise each
        student hidden block pairs with the teacher block at the nearest
        equal fractional depth."""
        if teacher_blocks < 2 or student_blocks < 2:
            raise UsageError("pairing needs networks with at least one hidden block each")
        pairs = []
        prev_t = 0
        for s in range(1, student_blocks):
            t = int(round(s * teacher_blocks / student_blocks))
            t = min(max(t, 1), teacher_blocks - 1)
            if t > prev_t:
                pairs.append((t, s))
                prev_t = t
        return cls(tuple(pairs))

    def validate_for(self, teacher_blocks: int, student_blocks: int) -> None:
        for t, s in self.pairs:
            if not (1 <= t <= teacher_blocks and 1 <= s <= student_blocks):
                raise UsageError(
                    f"pair ({t},{s}) out of range for networks with "
                    f"{teacher_blocks}/{student_blocks} blocks"
                )


def cross_entropy_loss(logits: Union[Tensor, np.ndarray], labels) -> Tensor:
    """Mean negative log softmax probability of the true class.

    Row maxima are subtracted before exponentiation; the subtraction is a
    constant of the differentiation, which leaves both the value and the
    gradient of the loss exact (softmax is shift invariant).
    """
    Z = logits if isinstance(logits, Tensor) else Tensor(np.asarray(logits, dtype=np.float64))
    if Z.data.ndim != 2 or Z.shape[1] < 2:
        raise UsageError(f"logits must be B x C with C >= 2, got {Z.shape}")
    B, C = Z.shape
    V = LabelIndicatorMatrix(labels, num_classes=C)
    if len(V) != B:
        raise UsageError(f"{len(V)} labels for {B} logit rows")
    row_max = Tensor(Z.data.max(axis=1, keepdims=True))
    shifted = tg.subtract(Z, tg.matmul(row_max, Tensor(np.ones((1, C)))))
    log_norm = tg.log(tg.tensor_sum(tg.exp(shifted), axis=1))
    picked = tg.tensor_sum(tg.multiply(shifted, Tensor(V.values)))
    return tg.scale(tg.subtract(tg.tensor_sum(log_norm), picked), 1.0 / B)


def softmax_probabilities(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def gkd_loss(graph_t: LatentGraph, graph_s: LatentGraph) -> Tensor:
    """Frobenius norm of the adjacency difference between a teacher graph
    and a student graph built on the same batch.

    Plain norm, not squared; by convention both graphs are degree
    normalized so the comparison is scale free. At an exact zero the
    gradient is taken as 0 (the minimum-norm subgradient).
    """
    if graph_t.num_vertices != graph_s.num_vertices:
        raise UsageError(
            f"teacher graph on {graph_t.num_vertices} vertices, student on {graph_s.num_vertices}"
        )
    diff = tg.subtract(graph_t.adjacency, graph_s.adjacency)
    return tg.sqrt(tg.tensor_sum(tg.multiply(diff, diff)))


def distillation_objective(
    task_loss: Tensor,
    kd_losses: Sequence[Tensor],
    weights: ObjectiveWeights,
) -> Tensor:
    """task_loss + lambda_kd * sum(kd_losses). With lambda_kd == 0 the task
    loss is returned unchanged (not a copy), so a zero-weight distillation
    run is the plain training run."""
    if weights.lambda_kd == 0.0 or not kd_losses:
        return task_loss
    total = kd_losses[0]
    for term in kd_losses[1:]:
        total = tg.add(total, term)
    return tg.add(task_loss, tg.scale(total, weights.lambda_kd))


def label_variation_loss(
    embeddings: Union[Tensor, np.ndarray],
    labels,
    params: Optional[GraphParams] = None,
) -> Tensor:
    """Label variation of the LGG built on output embeddings; minimizing it
    pushes samples of different classes apart.

    The graph is unnormalized by default with a gaussian kernel and median
    bandwidth, so the loss is twice the total retained inter-class
    similarity. The batch must contain at least two classes.
    """
    params = params or EMBEDDING_GRAPH_DEFAULTS
    y = np.asarray(labels)
    if np.unique(y).size < 2:
        raise DegenerateInputError("label variation needs at least two classes in the batch")
    graph = build_from_params(embeddings, params)
    return label_variation(graph, y).value


def per_layer_label_variation(
    representations: Sequence[Union[Tensor, np.ndarray]],
    labels,
    params: Optional[GraphParams] = None,
) -> List[Tensor]:
    """Label variation of one LGG per representation, in trace order."""
    params = params or GraphParams()
    y = np.asarray(labels)
    if np.unique(y).size < 2:
        raise DegenerateInputError("label variation needs at least two classes in the batch")
    return [label_variation(build_from_params(rep, params), y).value for rep in representations]


def smoothness_regularizer(trace, labels, params: Optional[GraphParams] = None) -> Tensor:
    """Sum of absolute differences of label variation between consecutive
    trace entries (input included): large jumps in class mixing from one
    layer to the next are penalized, wherever they occur.

    Accepts an ActivationTrace or any sequence of B x d representations.
    The caller scales by gamma when composing with a task loss.
    """
    reps = trace.representations if hasattr(trace, "representations") else list(trace)
    if len(reps) < 3:
        raise UsageError(f"smoothness needs an input and at least 2 blocks, got {len(reps)} entries")
    sigmas = per_layer_label_variation(reps, labels, params)
    total = None
    for a, b in zip(sigmas, sigmas[1:]):
        term = tg.absolute(tg.subtract(b, a))
        total = term if total is None else tg.add(total, term)
    return total
