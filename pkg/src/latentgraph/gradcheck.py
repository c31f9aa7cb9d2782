"""Finite-difference verification of every differentiable objective.

Each family draws random instances, compares the taped gradient against a
central difference, and reports the worst relative error. Instances are
resampled until the frozen quantities sit away from their decision
boundaries (k-th neighbor gaps, ReLU preactivations, absolute-value kinks),
because the gradient contract treats graph topology and bandwidth as
constants of the batch: a probe that flipped an edge or crossed a kink
would measure a different function, not a gradient error.

Gaussian-kernel cases pin the bandwidth to the base point's median for the
same reason; the analytic gradient does not differentiate through the
median, so the probes must not either.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import UsageError
from .graphs import (
    GraphParams,
    build_from_params,
    cosine_similarity_matrix,
    median_pairwise_distance,
)
from .models import Mlp
from .objectives import (
    ObjectiveWeights,
    cross_entropy_loss,
    distillation_objective,
    gkd_loss,
    label_variation_loss,
    smoothness_regularizer,
)
from .tensor import Tensor, finite_diff_check, finite_diff_check_multi

BATCH = 8
DIM = 5
K = 3
STEP = 1e-5
THRESHOLD = 1e-4
_RESAMPLE_LIMIT = 500


@dataclass
class CheckResult:
    name: str
    instances: int
    max_err: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_err <= self.threshold


# ---------------------------------------------------------------------------
# margin helpers: all evaluated at the base point; probe steps are 1e-5 and
# the margins are at least 1e-3, so probes stay on the same topology


def _knn_margin(sim: np.ndarray, k: int) -> float:
    s = sim.copy()
    np.fill_diagonal(s, -np.inf)
    ordered = np.sort(s, axis=1)[:, ::-1]
    return float(np.min(ordered[:, k - 1] - ordered[:, k]))


def _labels(rng: np.random.Generator, B: int, C: int) -> np.ndarray:
    y = np.arange(B) % C
    rng.shuffle(y)
    return y


def _stable_cosine_batch(rng: np.random.Generator, B: int, d: int, k: int) -> np.ndarray:
    for _ in range(_RESAMPLE_LIMIT):
        X = np.abs(rng.standard_normal((B, d))) + 0.1
        if _knn_margin(cosine_similarity_matrix(X).data, k) > 1e-3:
            return X
    raise UsageError("could not sample a margin-stable cosine batch")


def _preact_margin(net: Mlp, X: np.ndarray) -> float:
    h = X
    margin = np.inf
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W.data + b.data
        if i < net.num_blocks - 1:
            margin = min(margin, float(np.min(np.abs(z))))
            h = np.maximum(z, 0.0)
        else:
            h = z
    return margin


def _hidden_reps(net: Mlp, X: np.ndarray) -> List[np.ndarray]:
    reps = []
    h = X
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W.data + b.data
        h = np.maximum(z, 0.0) if i < net.num_blocks - 1 else z
        reps.append(h)
    return reps


def _stable_net_and_batch(
    rng: np.random.Generator, sizes: Tuple[int, ...], k: int, sigma_margins: bool
) -> Tuple[Mlp, np.ndarray, np.ndarray]:
    """Network + batch where ReLU preacts, every trace graph's k-th neighbor
    gap, all cosine row norms, and (optionally) consecutive label-variation
    gaps clear their margins."""
    from .graphs import label_variation

    for _ in range(_RESAMPLE_LIMIT):
        net = Mlp.init(sizes, rng)
        X = rng.standard_normal((BATCH, sizes[0]))
        y = _labels(rng, BATCH, sizes[-1] if sizes[-1] >= 2 else 2)
        reps = [X] + _hidden_reps(net, X)
        if _preact_margin(net, X) < 1e-3:
            continue
        if min(float(np.min(np.linalg.norm(r, axis=1))) for r in reps) < 1e-2:
            continue
        if any(_knn_margin(cosine_similarity_matrix(r).data, k) <= 1e-3 for r in reps):
            continue
        if sigma_margins:
            params = GraphParams(k=k, similarity="cosine", normalize=False)
            sigmas = [
                label_variation(build_from_params(r, params), y).value.item() for r in reps
            ]
            gaps = [abs(b - a) for a, b in zip(sigmas, sigmas[1:])]
            if min(gaps) < 1e-2:
                continue
        return net, X, y
    raise UsageError("could not sample a margin-stable network instance")


# ---------------------------------------------------------------------------
# check families, one instance each


def _check_cross_entropy(rng: np.random.Generator, step: float) -> float:
    C = 4
    Z = Tensor(rng.standard_normal((BATCH, C)) * 2.0)
    y = _labels(rng, BATCH, C)
    return finite_diff_check(lambda t: cross_entropy_loss(t, y), Z, step=step)


def _check_graph_discrepancy(rng: np.random.Generator, step: float) -> float:
    params = GraphParams(k=K, similarity="cosine", normalize=True)
    Xt = _stable_cosine_batch(rng, BATCH, DIM, K)
    graph_t = build_from_params(Xt, params)
    while True:
        Xs = _stable_cosine_batch(rng, BATCH, DIM, K)
        base = gkd_loss(graph_t, build_from_params(Xs, params)).item()
        if base > 1e-3:  # the norm is kinked at exactly zero
            break
    return finite_diff_check(
        lambda t: gkd_loss(graph_t, build_from_params(t, params)), Tensor(Xs), step=step
    )


def _check_label_variation(rng: np.random.Generator, step: float) -> float:
    from .graphs import gaussian_similarity_matrix

    y = _labels(rng, BATCH, 3)
    for _ in range(_RESAMPLE_LIMIT):
        E = rng.standard_normal((BATCH, DIM))
        h = median_pairwise_distance(E)
        if h < 1e-3:
            continue
        if _knn_margin(gaussian_similarity_matrix(E, bandwidth=h).data, K) > 1e-3:
            break
    else:
        raise UsageError("could not sample a margin-stable gaussian batch")
    # bandwidth pinned to the base point's median: it is a constant of the
    # differentiation, so the probes must not move it
    params = GraphParams(k=K, similarity="gaussian", normalize=False, bandwidth=h)
    return finite_diff_check(
        lambda t: label_variation_loss(t, y, params), Tensor(E), step=step
    )


def _check_smoothness(rng: np.random.Generator, step: float) -> float:
    net, X, y = _stable_net_and_batch(rng, (DIM, 6, 4), K, sigma_margins=True)
    params = GraphParams(k=K, similarity="cosine", normalize=False)

    def f(*leaves):
        probe = Mlp(leaves[0::2], leaves[1::2])
        return smoothness_regularizer(probe.forward_traced(X), y, params)

    return finite_diff_check_multi(f, net.parameters(), step=step)


def _check_distillation(rng: np.random.Generator, step: float) -> float:
    params = GraphParams(k=K, similarity="cosine", normalize=True)
    weights = ObjectiveWeights(lambda_kd=0.7)
    for _ in range(_RESAMPLE_LIMIT):
        teacher = Mlp.init((DIM, 7, 4), rng)
        student, X, y = _stable_net_and_batch(rng, (DIM, 6, 4), K, sigma_margins=False)
        t_rep = _hidden_reps(teacher, X)[0]
        if _knn_margin(cosine_similarity_matrix(t_rep).data, K) <= 1e-3:
            continue
        graph_t = build_from_params(t_rep, params)
        s_rep = _hidden_reps(student, X)[0]
        if gkd_loss(graph_t, build_from_params(s_rep, params)).item() > 1e-3:
            break
    else:
        raise UsageError("could not sample a margin-stable distillation instance")

    def f(*leaves):
        probe = Mlp(leaves[0::2], leaves[1::2])
        trace = probe.forward_traced(X)
        task = cross_entropy_loss(trace.logits, y)
        kd = gkd_loss(graph_t, build_from_params(trace.representations[1], params))
        return distillation_objective(task, [kd], weights)

    return finite_diff_check_multi(f, student.parameters(), step=step)


_FAMILIES: Tuple[Tuple[str, Callable], ...] = (
    ("cross-entropy", _check_cross_entropy),
    ("graph-discrepancy", _check_graph_discrepancy),
    ("label-variation", _check_label_variation),
    ("smoothness", _check_smoothness),
    ("distillation", _check_distillation),
)


def run_gradient_suite(
    n_instances: int = 10,
    seed: int = 0,
    step: float = STEP,
    threshold: float = THRESHOLD,
    extra_cases: Optional[Sequence[Tuple[str, Callable]]] = None,
) -> List[CheckResult]:
    """Run every check family n_instances times with independent streams.

    Returns one CheckResult per family with the worst observed relative
    error. ``extra_cases`` takes (name, fn) pairs with the same
    ``fn(rng, step) -> float`` contract as the built-in families.
    """
    if n_instances < 1:
        raise UsageError(f"n_instances must be positive, got {n_instances}")
    families = list(_FAMILIES) + list(extra_cases or [])
    streams = np.random.SeedSequence(seed).spawn(len(families))
    results = []
    for (name, fn), ss in zip(families, streams):
        rng = np.random.default_rng(ss)
        worst = 0.0
        for _ in range(n_instances):
            worst = max(worst, fn(rng, step))
        results.append(CheckResult(name=name, instances=n_instances, max_err=worst,
                                   threshold=threshold))
    return results
