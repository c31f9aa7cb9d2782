import numpy as np
import pytest

import latentgraph.tensor as tg
from latentgraph.errors import DegenerateInputError, UsageError
from latentgraph.graphs import (
    LabelIndicatorMatrix,
    LatentGraph,
    build_lgg,
    cosine_similarity_matrix,
    eigenmap_coords,
    gaussian_similarity_matrix,
    label_variation,
    laplacian,
    max_label_variation,
    median_pairwise_distance,
    normalized_label_variation,
    resolve_similarity,
    signal_variation,
    write_edge_list,
    write_eigenmap,
)
from latentgraph.tensor import Tape, Tensor


def pairwise_variation_oracle(A, S):
    # 1/2 sum_ij A_ij |s_i - s_j|^2, straight double loop
    B = A.shape[0]
    total = 0.0
    for i in range(B):
        for j in range(B):
            d = S[i] - S[j]
            total += 0.5 * A[i, j] * float(d @ d)
    return total


def trace_variation_oracle(A, S):
    L = np.diag(A.sum(axis=1)) - A
    return float(np.trace(S.T @ L @ S))


def label_pair_oracle(A, y):
    B = A.shape[0]
    total = 0.0
    for i in range(B):
        for j in range(i + 1, B):
            if y[i] != y[j]:
                total += 2.0 * A[i, j]
    return total


def manual_graph(A, normalized=False):
    A = np.asarray(A, dtype=np.float64)
    return LatentGraph(Tensor(A), A > 0, k=1, similarity="manual", normalized=normalized)


def random_graph(rng, B=None, normalize=False, kind=None):
    B = B or rng.integers(6, 17)
    d = rng.integers(2, 7)
    X = rng.standard_normal((int(B), int(d)))
    if kind is None:
        kind = "cosine" if rng.random() < 0.5 else "gaussian"
    if kind == "cosine":
        X = np.abs(X) + 0.1
    k = int(rng.integers(1, min(6, B)))
    return build_lgg(X, k=k, similarity=kind, normalize=normalize), X


# ---------------------------------------------------------------------------
# hand-checked values


def test_path_graph_label_variation():
    # path 0-1-2-3 with unit weights, classes [0,0,1,1]: the only inter-class
    # edge is 1-2, so tr(V^T L V) = 2; the bound is 2 * (2*2) = 8
    A = np.array(
        [
            [0, 1, 0, 0],
            [1, 0, 1, 0],
            [0, 1, 0, 1],
            [0, 0, 1, 0],
        ],
        dtype=np.float64,
    )
    g = manual_graph(A)
    y = np.array([0, 0, 1, 1])
    v = label_variation(g, y)
    assert abs(v.raw - 2.0) < 1e-12
    assert abs(max_label_variation(y) - 8.0) < 1e-12
    nv = normalized_label_variation(g, y)
    assert abs(nv.normalized - 0.25) < 1e-12


def test_four_cycle_spectrum():
    # C4 Laplacian eigenvalues are 0, 2, 2, 4
    A = np.array(
        [
            [0, 1, 0, 1],
            [1, 0, 1, 0],
            [0, 1, 0, 1],
            [1, 0, 1, 0],
        ],
        dtype=np.float64,
    )
    g = manual_graph(A)
    res = eigenmap_coords(g, dim=3)
    assert res.zero_multiplicity == 1
    assert np.max(np.abs(res.eigenvalues - np.array([2.0, 2.0, 4.0]))) < 1e-8


def test_laplacian_rows_sum_to_zero():
    rng = np.random.default_rng(7)
    g, _ = random_graph(rng)
    L = laplacian(g)
    assert np.max(np.abs(L.sum(axis=1))) < 1e-12
    assert np.max(np.abs(L - L.T)) == 0.0


def test_gaussian_hand_value():
    # points 0, 3, 4 on a line: pairwise distances {3, 4, 1}, median 3,
    # so S_01 = exp(-9 / (2*9)) = exp(-1/2)
    X = np.array([[0.0], [3.0], [4.0]])
    assert abs(median_pairwise_distance(X) - 3.0) < 1e-15
    S = gaussian_similarity_matrix(X)
    assert abs(S.data[0, 1] - np.exp(-0.5)) < 1e-12
    assert abs(S.data[0, 2] - np.exp(-16.0 / 18.0)) < 1e-12


def test_cosine_hand_value():
    X = np.array([[1.0, 0.0], [1.0, 1.0]])
    S = cosine_similarity_matrix(X)
    assert abs(S.data[0, 1] - 1.0 / np.sqrt(2.0)) < 1e-15
    assert abs(S.data[0, 0] - 1.0) < 1e-15


# ---------------------------------------------------------------------------
# variation measures vs oracles


def test_trace_form_is_half_pairwise_sum():
    rng = np.random.default_rng(11)
    for _ in range(30):
        g, _ = random_graph(rng, normalize=bool(rng.random() < 0.5))
        S = rng.standard_normal((g.num_vertices, int(rng.integers(1, 5))))
        got = signal_variation(g, S).raw
        A = g.values
        assert abs(got - pairwise_variation_oracle(A, S)) < 1e-10 * max(1.0, abs(got))
        assert abs(got - trace_variation_oracle(A, S)) < 1e-10 * max(1.0, abs(got))


def test_label_variation_is_interclass_pair_sum():
    rng = np.random.default_rng(13)
    for _ in range(20):
        g, _ = random_graph(rng)
        y = rng.integers(0, 3, size=g.num_vertices)
        if len(np.unique(y)) < 2:
            continue
        got = label_variation(g, y).raw
        assert abs(got - label_pair_oracle(g.values, y)) < 1e-10


def test_constant_signal_has_zero_variation():
    rng = np.random.default_rng(17)
    g, _ = random_graph(rng)
    S = np.full((g.num_vertices, 3), 2.5)
    assert signal_variation(g, S).raw < 1e-12


def test_normalized_label_variation_bounds():
    rng = np.random.default_rng(19)
    for _ in range(20):
        g, _ = random_graph(rng)
        y = rng.integers(0, 4, size=g.num_vertices)
        if len(np.unique(y)) < 2:
            continue
        nv = normalized_label_variation(g, y)
        assert 0.0 <= nv.normalized <= 1.0


def test_normalized_label_variation_extremes():
    # complete unit graph with all-distinct classes saturates the bound
    B = 5
    A = np.ones((B, B)) - np.eye(B)
    g = manual_graph(A)
    y = np.arange(B)
    assert abs(normalized_label_variation(g, y).normalized - 1.0) < 1e-12
    # block-diagonal graph with per-block classes has no inter-class edges
    A2 = np.zeros((4, 4))
    A2[0, 1] = A2[1, 0] = 1.0
    A2[2, 3] = A2[3, 2] = 1.0
    g2 = manual_graph(A2)
    assert normalized_label_variation(g2, np.array([0, 0, 1, 1])).normalized == 0.0


def test_normalized_label_variation_rejects_normalized_graph():
    rng = np.random.default_rng(23)
    g, _ = random_graph(rng, normalize=True)
    y = rng.integers(0, 2, size=g.num_vertices)
    y[0], y[1] = 0, 1
    with pytest.raises(UsageError):
        normalized_label_variation(g, y)


def test_single_class_batch_rejected():
    g = manual_graph(np.ones((3, 3)) - np.eye(3))
    with pytest.raises(DegenerateInputError):
        normalized_label_variation(g, np.zeros(3, dtype=int))


def test_label_indicator_shape_and_rows():
    V = LabelIndicatorMatrix(np.array([2, 0, 1, 2]))
    assert V.values.shape == (4, 3)
    assert np.array_equal(V.values.sum(axis=1), np.ones(4))
    assert V.values[0, 2] == 1.0
    with pytest.raises(UsageError):
        LabelIndicatorMatrix(np.array([0, 3]), num_classes=2)
    with pytest.raises(UsageError):
        LabelIndicatorMatrix(np.array([-1, 0]))


# ---------------------------------------------------------------------------
# construction behavior


def test_knn_tie_breaks_to_lowest_index():
    # rows 0 and 1 coincide; row 3 at 45 degrees ties between 0, 1, 2 under
    # cosine, so with k=1 it must pick vertex 0
    X = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    g = build_lgg(X, k=1, similarity="cosine")
    expected = np.zeros((4, 4), dtype=bool)
    for i, j in [(0, 1), (2, 3), (0, 3)]:
        expected[i, j] = expected[j, i] = True
    assert np.array_equal(g.mask, expected)


def test_auto_similarity_resolution():
    rng = np.random.default_rng(29)
    nonneg = np.abs(rng.standard_normal((6, 3))) + 0.1
    assert resolve_similarity(nonneg, "auto") == "cosine"
    assert resolve_similarity(rng.standard_normal((6, 3)), "auto") == "gaussian"
    withzero = nonneg.copy()
    withzero[2] = 0.0
    assert resolve_similarity(withzero, "auto") == "gaussian"
    assert build_lgg(nonneg, k=2).similarity == "cosine"
    with pytest.raises(UsageError):
        resolve_similarity(nonneg, "euclidean")


def test_cosine_rejects_zero_row():
    X = np.array([[1.0, 2.0], [0.0, 0.0], [3.0, 1.0]])
    with pytest.raises(DegenerateInputError, match="index 1"):
        build_lgg(X, k=1, similarity="cosine")


def test_gaussian_rejects_duplicate_batch():
    X = np.ones((5, 3))
    with pytest.raises(DegenerateInputError):
        build_lgg(X, k=2, similarity="gaussian")


def test_k_out_of_range():
    X = np.random.default_rng(0).standard_normal((5, 3))
    with pytest.raises(UsageError):
        build_lgg(X, k=5, similarity="gaussian")
    with pytest.raises(UsageError):
        build_lgg(X, k=0, similarity="gaussian")


def test_fixed_bandwidth_matches_formula():
    rng = np.random.default_rng(31)
    X = rng.standard_normal((6, 3))
    h = 0.8
    S = gaussian_similarity_matrix(X, bandwidth=h).data
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    assert np.max(np.abs(S - np.exp(-d2 / (2 * h * h)))) < 1e-12


def test_degree_normalization_matches_direct_formula():
    rng = np.random.default_rng(37)
    X = rng.standard_normal((10, 4))
    raw = build_lgg(X, k=3, similarity="gaussian")
    norm = build_lgg(X, k=3, similarity="gaussian", normalize=True)
    d = raw.values.sum(axis=1)
    expected = raw.values / np.sqrt(np.outer(d, d))
    assert np.max(np.abs(norm.values - expected)) < 1e-14


def test_construction_properties():
    # symmetry, zero diagonal, degree bounds, permutation equivariance,
    # cosine scale invariance, normalized spectrum in [-1, 1]
    rng = np.random.default_rng(41)
    for _ in range(40):
        kind = "cosine" if rng.random() < 0.5 else "gaussian"
        B = int(rng.integers(6, 21))
        d = int(rng.integers(2, 7))
        X = rng.standard_normal((B, d))
        if kind == "cosine":
            X = np.abs(X) + 0.05
        k = int(rng.integers(1, min(6, B)))
        g = build_lgg(X, k=k, similarity=kind)
        A = g.values
        assert np.array_equal(A, A.T)
        assert np.all(np.diag(A) == 0.0)
        assert np.all(A >= 0.0)
        degs = g.structural_degrees()
        assert degs.min() >= k and degs.max() <= B - 1

        perm = rng.permutation(B)
        gp = build_lgg(X[perm], k=k, similarity=kind)
        assert np.array_equal(gp.mask, g.mask[np.ix_(perm, perm)])
        assert np.max(np.abs(gp.values - A[np.ix_(perm, perm)])) < 1e-12

        if kind == "cosine":
            scales = rng.uniform(0.5, 3.0, size=(B, 1))
            gs = build_lgg(X * scales, k=k, similarity="cosine")
            assert np.array_equal(gs.mask, g.mask)
            assert np.max(np.abs(gs.values - A)) < 1e-12

        gn = build_lgg(X, k=k, similarity=kind, normalize=True)
        evals = np.linalg.eigvalsh(gn.values)
        assert evals.min() >= -1.0 - 1e-10 and evals.max() <= 1.0 + 1e-10


# ---------------------------------------------------------------------------
# gradients through the construction


def _topology_margin(sim, k):
    s = sim.copy()
    np.fill_diagonal(s, -np.inf)
    ordered = np.sort(s, axis=1)[:, ::-1]
    gaps = ordered[:, k - 1] - ordered[:, k]
    return float(np.min(gaps))


def _stable_batch(rng, B, d, k, kind, bandwidth=None):
    # resample until the k-th neighbor is unambiguous, so finite-difference
    # probes cannot flip the frozen edge mask
    for _ in range(200):
        X = rng.standard_normal((B, d))
        if kind == "cosine":
            X = np.abs(X) + 0.1
            S = cosine_similarity_matrix(X).data
        else:
            S = gaussian_similarity_matrix(X, bandwidth=bandwidth).data
        if _topology_margin(S, k) > 1e-3:
            return X
    raise AssertionError("no margin-stable batch found")


def test_signal_variation_gradient_wrt_signals():
    rng = np.random.default_rng(43)
    g, _ = random_graph(rng, B=8)
    S0 = rng.standard_normal((8, 3))

    def f(S):
        return signal_variation(g, S).value

    err = tg.finite_diff_check(f, Tensor(S0), step=1e-5)
    assert err < 1e-6


def test_variation_gradient_through_cosine_graph():
    rng = np.random.default_rng(47)
    sig = rng.standard_normal((8, 2))
    for normalize in (False, True):
        X0 = _stable_batch(rng, 8, 4, 3, "cosine")

        def f(X):
            g = build_lgg(X, k=3, similarity="cosine", normalize=normalize)
            return signal_variation(g, sig).value

        err = tg.finite_diff_check(f, Tensor(X0), step=1e-5)
        assert err < 1e-4, f"normalize={normalize}: {err}"


def test_variation_gradient_through_gaussian_graph():
    # fixed bandwidth: the median heuristic is frozen during differentiation,
    # so finite differences only match when the bandwidth cannot move
    rng = np.random.default_rng(53)
    sig = rng.standard_normal((8, 2))
    X0 = _stable_batch(rng, 8, 4, 3, "gaussian", bandwidth=1.0)

    def f(X):
        g = build_lgg(X, k=3, similarity="gaussian", bandwidth=1.0)
        return signal_variation(g, sig).value

    err = tg.finite_diff_check(f, Tensor(X0), step=1e-5)
    assert err < 1e-4


def test_label_variation_gradient_through_graph():
    rng = np.random.default_rng(59)
    y = np.array([0, 0, 1, 1, 2, 2, 0, 1])
    X0 = _stable_batch(rng, 8, 4, 3, "cosine")

    def f(X):
        g = build_lgg(X, k=3, similarity="cosine")
        return label_variation(g, y).value

    err = tg.finite_diff_check(f, Tensor(X0), step=1e-5)
    assert err < 1e-4


def test_variation_value_is_live_on_tape():
    rng = np.random.default_rng(61)
    X0 = np.abs(rng.standard_normal((6, 3))) + 0.1
    with Tape() as tape:
        X = Tensor(X0)
        g = build_lgg(X, k=2, similarity="cosine")
        v = signal_variation(g, rng.standard_normal((6, 2)))
        grads = tape.backward(v.value)
    assert grads[X].shape == (6, 3)
    assert np.any(grads[X] != 0.0)


# ---------------------------------------------------------------------------
# eigenmaps


def test_eigenmap_sign_convention():
    rng = np.random.default_rng(67)
    for _ in range(10):
        g, _ = random_graph(rng, B=10)
        res = eigenmap_coords(g, dim=2)
        assert res.coords.shape == (10, 2)
        for j in range(2):
            col = res.coords[:, j]
            assert col[np.argmax(np.abs(col))] > 0.0


def test_eigenmap_deterministic():
    rng = np.random.default_rng(71)
    g, _ = random_graph(rng, B=12)
    a = eigenmap_coords(g, dim=2)
    b = eigenmap_coords(g, dim=2)
    assert np.array_equal(a.coords, b.coords)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)


def test_eigenmap_disconnected_components():
    # two disjoint triangles: zero eigenvalue has multiplicity 2, the rest
    # are 3 (each triangle contributes 3, 3)
    A = np.zeros((6, 6))
    for block in (range(3), range(3, 6)):
        for i in block:
            for j in block:
                if i != j:
                    A[i, j] = 1.0
    g = manual_graph(A)
    res = eigenmap_coords(g, dim=2)
    assert res.zero_multiplicity == 2
    assert np.max(np.abs(res.eigenvalues - 3.0)) < 1e-10


def test_eigenmap_too_few_nonzero_directions():
    A = np.zeros((4, 4))
    A[0, 1] = A[1, 0] = 1.0
    A[2, 3] = A[3, 2] = 1.0
    g = manual_graph(A)
    with pytest.raises(DegenerateInputError):
        eigenmap_coords(g, dim=3)


def test_eigenmap_needs_enough_vertices():
    g = manual_graph(np.ones((3, 3)) - np.eye(3))
    with pytest.raises(UsageError):
        eigenmap_coords(g, dim=3)


# ---------------------------------------------------------------------------
# exports


def test_edge_list_roundtrip(tmp_path):
    rng = np.random.default_rng(73)
    g, _ = random_graph(rng, B=10)
    path = tmp_path / "edges.tsv"
    n = write_edge_list(g, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "src\tdst\tweight"
    assert len(lines) == n + 1
    assert n == int(g.mask.sum()) // 2
    rebuilt = np.zeros_like(g.values)
    for line in lines[1:]:
        i, j, w = line.split("\t")
        i, j = int(i), int(j)
        assert i < j
        rebuilt[i, j] = rebuilt[j, i] = float(w)
    assert np.max(np.abs(rebuilt - g.values)) < 1e-8


def test_edge_list_interclass_filter(tmp_path):
    rng = np.random.default_rng(79)
    g, _ = random_graph(rng, B=10)
    y = rng.integers(0, 2, size=10)
    y[:2] = [0, 1]
    path = tmp_path / "inter.tsv"
    n = write_edge_list(g, path, labels=y, interclass_only=True)
    expected = sum(
        1
        for i in range(10)
        for j in range(i + 1, 10)
        if g.mask[i, j] and y[i] != y[j]
    )
    assert n == expected
    for line in path.read_text().splitlines()[1:]:
        i, j, _ = line.split("\t")
        assert y[int(i)] != y[int(j)]
    with pytest.raises(UsageError):
        write_edge_list(g, path, interclass_only=True)


def test_eigenmap_export_format(tmp_path):
    rng = np.random.default_rng(83)
    g, _ = random_graph(rng, B=8)
    res = eigenmap_coords(g, dim=2)
    y = rng.integers(0, 3, size=8)
    path = tmp_path / "map.tsv"
    write_eigenmap(res.coords, y, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "index\tclass\tx\ty"
    assert len(lines) == 9
    first = lines[1].split("\t")
    assert first[0] == "0" and first[1] == str(int(y[0]))
