"""Latent geometry graphs: k-NN similarity graphs over a batch of representations.

A latent geometry graph (LGG) has one vertex per sample in a batch; edge
weights are similarities between the samples' representations at some layer.
Construction: full similarity matrix, per-row top-k thresholding, union
symmetrization (an edge survives if either endpoint selected the other),
optional symmetric degree normalization. The top-k edge mask is frozen with
respect to differentiation; gradients flow through the retained similarity
values and through degree normalization.

Variation measures follow the combinatorial Laplacian quadratic form
sigma = tr(S^T L S) with L = D - A. The equivalent pairwise form carries a
half: tr(S^T L S) = 1/2 * sum_ij A_ij * sum_s (s_i - s_j)^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import tensor as tg
from .errors import DegenerateInputError, NumericError, UsageError
from .tensor import Tensor

SIMILARITY_KINDS = ("cosine", "gaussian")

ArrayLike = Union[Tensor, np.ndarray]


@dataclass(frozen=True)
class GraphParams:
    """Construction knobs for an LGG, as carried around by objectives and configs."""

    k: int = 5
    similarity: str = "auto"  # cosine | gaussian | auto (pick per batch)
    normalize: bool = False
    bandwidth: Union[float, str] = "median"


def _as_matrix(X: ArrayLike) -> Tensor:
    t = X if isinstance(X, Tensor) else Tensor(np.asarray(X, dtype=np.float64))
    if t.data.ndim != 2:
        raise UsageError(f"expected a 2-D batch of representations, got shape {t.shape}")
    return t


def resolve_similarity(values: np.ndarray, kind: str) -> str:
    """Resolve 'auto' to cosine for nonnegative batches without zero rows, else gaussian."""
    if kind in SIMILARITY_KINDS:
        return kind
    if kind != "auto":
        raise UsageError(f"unknown similarity kind {kind!r}")
    if values.size and values.min() >= 0.0 and np.linalg.norm(values, axis=1).min() > 0.0:
        return "cosine"
    return "gaussian"


def cosine_similarity_matrix(X: ArrayLike) -> Tensor:
    """Pairwise cosine similarities of the rows of X, exactly symmetric.

    Intended for nonnegative data (post-ReLU activations), where values lie
    in [0, 1]; defined for any batch without zero-norm rows.
    """
    Xt = _as_matrix(X)
    normalized = tg.row_normalize(Xt)
    S = tg.matmul(normalized, tg.transpose(normalized))
    return tg.scale(tg.add(S, tg.transpose(S)), 0.5)


def median_pairwise_distance(values: np.ndarray) -> float:
    """Median of the B(B-1)/2 pairwise Euclidean distances of the rows."""
    B = values.shape[0]
    if B < 2:
        raise UsageError("median bandwidth needs at least two rows")
    sq = (values * values).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * values @ values.T, 0.0)
    iu = np.triu_indices(B, k=1)
    return float(np.median(np.sqrt(d2[iu])))


def gaussian_similarity_matrix(X: ArrayLike, bandwidth: Union[float, str] = "median") -> Tensor:
    """Gaussian kernel S_ij = exp(-|x_i - x_j|^2 / (2 h^2)) on the rows of X.

    With bandwidth="median", h is the median pairwise distance of the batch,
    treated as a constant with respect to differentiation.
    """
    Xt = _as_matrix(X)
    B = Xt.shape[0]
    if B < 2:
        raise UsageError("gaussian similarity needs a batch of at least 2 rows")
    if bandwidth == "median":
        h = median_pairwise_distance(Xt.data)
        if h == 0.0:
            raise DegenerateInputError("median pairwise distance is zero (duplicate batch)")
    else:
        h = float(bandwidth)
        if not (h > 0.0 and np.isfinite(h)):
            raise UsageError(f"bandwidth must be positive, got {bandwidth!r}")
    sq = tg.multiply(Xt, Xt)
    row_sq = tg.tensor_sum(sq, axis=1)  # (B, 1)
    tiled = tg.matmul(row_sq, Tensor(np.ones((1, B))))
    gram = tg.matmul(Xt, tg.transpose(Xt))
    d2 = tg.subtract(tg.add(tiled, tg.transpose(tiled)), tg.scale(gram, 2.0))
    d2 = tg.relu(d2)  # clamp the -1e-16 rounding residue of duplicate rows
    S = tg.exp(tg.scale(d2, -1.0 / (2.0 * h * h)))
    return tg.scale(tg.add(S, tg.transpose(S)), 0.5)


def _knn_union_mask(sim: np.ndarray, k: int) -> np.ndarray:
    """Boolean edge mask: per-row top-k (ties to the lowest index), OR-symmetrized."""
    B = sim.shape[0]
    if not 1 <= k <= B - 1:
        raise UsageError(f"k must be in [1, {B - 1}] for a batch of {B}, got {k}")
    ranked = sim.copy()
    np.fill_diagonal(ranked, -np.inf)
    mask = np.zeros((B, B), dtype=bool)
    for i in range(B):
        order = np.argsort(-ranked[i], kind="stable")
        mask[i, order[:k]] = True
    mask |= mask.T
    np.fill_diagonal(mask, False)
    degrees = mask.sum(axis=1)
    assert degrees.min() >= k and degrees.max() <= B - 1
    return mask


class LatentGraph:
    """Symmetric nonnegative adjacency over one batch, with construction metadata.

    ``adjacency`` may live on an active tape; ``mask`` is the frozen edge
    structure. Graphs are immutable after construction.
    """

    def __init__(self, adjacency: Tensor, mask: np.ndarray, k: int, similarity: str, normalized: bool):
        B = adjacency.shape[0]
        if adjacency.shape != (B, B) or mask.shape != (B, B):
            raise UsageError(f"adjacency/mask must be square, got {adjacency.shape} and {mask.shape}")
        self.adjacency = adjacency
        self.mask = mask
        self.k = k
        self.similarity = similarity
        self.normalized = normalized

    @property
    def num_vertices(self) -> int:
        return self.adjacency.shape[0]

    @property
    def values(self) -> np.ndarray:
        return self.adjacency.data

    def degrees(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def structural_degrees(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    def laplacian(self) -> np.ndarray:
        A = self.values
        return np.diag(A.sum(axis=1)) - A


def laplacian(graph: LatentGraph) -> np.ndarray:
    """Combinatorial Laplacian L = D - A; symmetric PSD with zero row sums."""
    return graph.laplacian()


def build_lgg(
    X: ArrayLike,
    k: int,
    similarity: str = "auto",
    normalize: bool = False,
    bandwidth: Union[float, str] = "median",
) -> LatentGraph:
    """Construct the latent geometry graph of a batch of representations.

    Steps: full similarity matrix; per-row retention of the k largest
    off-diagonal entries; union symmetrization (edge kept when either row
    retained the other, with weight S_ij); optionally the symmetric degree
    normalization A_hat = D^{-1/2} A D^{-1/2} computed from the symmetrized
    graph. The diagonal is zero throughout.
    """
    Xt = _as_matrix(X)
    kind = resolve_similarity(Xt.data, similarity)
    if kind == "cosine":
        S = cosine_similarity_matrix(Xt)
    else:
        S = gaussian_similarity_matrix(Xt, bandwidth=bandwidth)
    mask = _knn_union_mask(S.data, k)
    A = tg.multiply(S, Tensor(mask.astype(np.float64)))
    if normalize:
        deg = tg.tensor_sum(A, axis=1)  # (B, 1)
        if deg.data.min() <= 0.0:
            i = int(np.argmin(deg.data.ravel()))
            raise DegenerateInputError(f"vertex {i} has nonpositive degree; cannot normalize")
        inv_sqrt = tg.exp(tg.scale(tg.log(deg), -0.5))
        A = tg.multiply(A, tg.matmul(inv_sqrt, tg.transpose(inv_sqrt)))
    return LatentGraph(A, mask, k=k, similarity=kind, normalized=normalize)


def build_from_params(X: ArrayLike, params: GraphParams) -> LatentGraph:
    return build_lgg(
        X,
        k=params.k,
        similarity=params.similarity,
        normalize=params.normalize,
        bandwidth=params.bandwidth,
    )


# ---------------------------------------------------------------------------
# labels and variation measures


class LabelIndicatorMatrix:
    """B x C binary matrix whose column c indicates membership of class c."""

    def __init__(self, class_of, num_classes: Optional[int] = None):
        class_of = np.asarray(class_of)
        if class_of.ndim != 1 or class_of.size == 0:
            raise UsageError(f"class vector must be 1-D and nonempty, got shape {class_of.shape}")
        if not np.issubdtype(class_of.dtype, np.integer):
            rounded = class_of.astype(np.int64)
            if not np.array_equal(rounded, class_of):
                raise UsageError("class indices must be integers")
            class_of = rounded
        if class_of.min() < 0:
            raise UsageError("class indices must be nonnegative")
        C = int(num_classes) if num_classes is not None else int(class_of.max()) + 1
        if class_of.max() >= C:
            raise UsageError(f"class index {int(class_of.max())} out of range for {C} classes")
        values = np.zeros((class_of.size, C))
        values[np.arange(class_of.size), class_of] = 1.0
        values.flags.writeable = False
        self.values = values
        self.class_of = class_of.copy()

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]


def _as_indicator(labels) -> LabelIndicatorMatrix:
    if isinstance(labels, LabelIndicatorMatrix):
        return labels
    return LabelIndicatorMatrix(labels)


@dataclass(frozen=True)
class VariationValue:
    """A graph-signal variation: raw value, optional [0,1] normalization, live node.

    ``value`` is the scalar tensor the measure was computed as; when the
    graph was built under an active tape it carries gradients, so objectives
    compose on it. ``raw`` is the plain float (clamped at 0 against rounding).
    """

    raw: float
    normalized: Optional[float]
    value: Tensor


def signal_variation(graph: LatentGraph, signals: ArrayLike) -> VariationValue:
    """Total variation tr(S^T L S) of column signals S over the graph."""
    if isinstance(signals, Tensor):
        S = signals
    else:
        arr = np.asarray(signals, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        S = Tensor(arr)
    B = graph.num_vertices
    if S.data.ndim != 2 or S.shape[0] != B:
        raise UsageError(f"signal rows {S.shape} do not match graph on {B} vertices")
    A = graph.adjacency
    deg = tg.tensor_sum(A, axis=1)  # (B, 1)
    row_sq = tg.tensor_sum(tg.multiply(S, S), axis=1)  # (B, 1)
    term_degree = tg.tensor_sum(tg.multiply(deg, row_sq))
    term_cross = tg.tensor_sum(tg.multiply(A, tg.matmul(S, tg.transpose(S))))
    sigma = tg.subtract(term_degree, term_cross)
    return VariationValue(raw=max(0.0, sigma.item()), normalized=None, value=sigma)


def label_variation(graph: LatentGraph, labels) -> VariationValue:
    """tr(V^T L V) for the label indicator matrix V: twice the total weight
    of edges joining samples of distinct classes."""
    V = _as_indicator(labels)
    if len(V) != graph.num_vertices:
        raise UsageError(f"{len(V)} labels for a graph on {graph.num_vertices} vertices")
    return signal_variation(graph, V.values)


def max_label_variation(labels) -> float:
    """Label variation of the densest possible graph: weight 1 on every
    distinct-class pair. Equals 2 * (number of unordered inter-class pairs)."""
    V = _as_indicator(labels)
    counts = V.values.sum(axis=0)
    n = counts.sum()
    inter_pairs = (n * n - (counts * counts).sum()) / 2.0
    return float(2.0 * inter_pairs)


def normalized_label_variation(graph: LatentGraph, labels) -> VariationValue:
    """Label variation scaled so 1 means every inter-class pair connected at
    weight 1 and 0 means classes are disconnected.

    Only defined on unnormalized adjacencies with weights in [0, 1]; degree
    normalization invalidates the upper bound.
    """
    if graph.normalized:
        raise UsageError("normalized label variation is undefined on degree-normalized graphs")
    if graph.values.min() < -1e-12:
        raise DegenerateInputError("adjacency has negative weights; [0,1] bound does not hold")
    V = _as_indicator(labels)
    sigma_max = max_label_variation(V)
    if sigma_max == 0.0:
        raise DegenerateInputError("batch contains a single class; normalization undefined")
    base = label_variation(graph, V)
    normalized = min(1.0, max(0.0, base.raw / sigma_max))
    return VariationValue(raw=base.raw, normalized=normalized, value=base.value)


# ---------------------------------------------------------------------------
# spectral layout


@dataclass(frozen=True)
class EigenmapResult:
    """2-D (or dim-D) spectral layout: eigenvectors of the dim smallest
    nonzero Laplacian eigenvalues, sign-fixed per column."""

    coords: np.ndarray
    eigenvalues: np.ndarray
    zero_multiplicity: int


def eigenmap_coords(graph: LatentGraph, dim: int = 2) -> EigenmapResult:
    """Laplacian-eigenmap coordinates for the graph's vertices.

    Deterministic: the dense symmetric eigensolver is seed-free, and each
    column's sign is fixed by making its largest-magnitude entry positive.
    The zero eigenvalue has one copy per connected component; those
    directions are skipped and the multiplicity reported.
    """
    B = graph.num_vertices
    if dim < 1 or B < dim + 1:
        raise UsageError(f"eigenmap needs at least dim+1={dim + 1} vertices, graph has {B}")
    L = graph.laplacian()
    try:
        lam, vec = np.linalg.eigh(L)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"eigensolver failed to converge: {e}") from e
    tol = 1e-10 * max(1.0, float(lam[-1]))
    nonzero = np.flatnonzero(lam >= tol)
    zero_multiplicity = int(B - nonzero.size)
    if nonzero.size < dim:
        raise DegenerateInputError(
            f"only {nonzero.size} nonzero eigenvalues ({zero_multiplicity} components); need {dim}"
        )
    take = nonzero[:dim]
    coords = vec[:, take].copy()
    for j in range(coords.shape[1]):
        col = coords[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            coords[:, j] = -col
    return EigenmapResult(coords=coords, eigenvalues=lam[take].copy(), zero_multiplicity=zero_multiplicity)


# ---------------------------------------------------------------------------
# exports


def write_edge_list(graph: LatentGraph, path, labels=None, interclass_only: bool = False) -> int:
    """Write the undirected edge list as TSV `src  dst  weight` (i < j),
    weights at 9 significant digits. Returns the number of edges written."""
    if interclass_only and labels is None:
        raise UsageError("interclass_only requires labels")
    class_of = _as_indicator(labels).class_of if labels is not None else None
    A = graph.values
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("src\tdst\tweight\n")
        B = graph.num_vertices
        for i in range(B):
            for j in range(i + 1, B):
                if not graph.mask[i, j]:
                    continue
                if interclass_only and class_of[i] == class_of[j]:
                    continue
                fh.write(f"{i}\t{j}\t{A[i, j]:.9g}\n")
                count += 1
    return count


def write_eigenmap(coords: np.ndarray, labels, path) -> None:
    """Write 2-D eigenmap coordinates as TSV `index  class  x  y`."""
    class_of = _as_indicator(labels).class_of
    coords = np.asarray(coords)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] != class_of.size:
        raise UsageError(f"expected (B, 2) coordinates matching {class_of.size} labels, got {coords.shape}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index\tclass\tx\ty\n")
        for i in range(coords.shape[0]):
            fh.write(f"{i}\t{int(class_of[i])}\t{coords[i, 0]:.9g}\t{coords[i, 1]:.9g}\n")
