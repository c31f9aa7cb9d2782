import numpy as np
import pytest

from latentgraph.errors import FormatError, UsageError
from latentgraph.models import Mlp, accuracy, forward_traced, load_weights, predict_classes, save_weights
from latentgraph.tensor import Tape, Tensor


def np_forward(weights, biases, X):
    # independent numpy evaluation of the same block stack
    h = X
    for i, (W, b) in enumerate(zip(weights, biases)):
        h = h @ W + b
        if i < len(weights) - 1:
            h = np.maximum(h, 0.0)
    return h


def random_net(rng, sizes=None):
    if sizes is None:
        depth = int(rng.integers(1, 4))
        sizes = [int(rng.integers(2, 7)) for _ in range(depth + 1)]
    return Mlp.init(sizes, rng), sizes


def test_zero_network_traces_are_zero():
    net = Mlp(
        [Tensor(np.zeros((3, 4))), Tensor(np.zeros((4, 2)))],
        [Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 2)))],
    )
    trace = net.forward_traced(np.random.default_rng(0).standard_normal((5, 3)))
    for block in trace.blocks:
        assert np.all(block.data == 0.0)


def test_single_block_is_affine_map():
    rng = np.random.default_rng(1)
    W = rng.standard_normal((3, 2))
    b = rng.standard_normal((1, 2))
    net = Mlp([Tensor(W)], [Tensor(b)])
    X = rng.standard_normal((6, 3))
    out = net.forward(X).data
    assert np.max(np.abs(out - (X @ W + b))) < 1e-14


def test_traced_matches_untraced_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        net, sizes = random_net(rng)
        X = rng.standard_normal((int(rng.integers(2, 9)), sizes[0]))
        trace = forward_traced(net, X)
        expected = np_forward([W.data for W in net.weights], [b.data for b in net.biases], X)
        assert np.max(np.abs(trace.logits.data - expected)) < 1e-12
        assert len(trace) == net.num_blocks + 1
        assert trace.blocks[-1] is trace.logits


def test_trace_entries_match_per_layer_composition():
    rng = np.random.default_rng(3)
    net, sizes = random_net(rng, [4, 5, 3, 2])
    X = rng.standard_normal((7, 4))
    trace = net.forward_traced(X)
    h = X
    for i in range(net.num_blocks):
        h = h @ net.weights[i].data + net.biases[i].data
        if i < net.num_blocks - 1:
            h = np.maximum(h, 0.0)
        assert np.max(np.abs(trace.blocks[i].data - h)) < 1e-12
    # hidden entries are post-activation, so nonnegative
    for block in trace.blocks[:-1]:
        assert block.data.min() >= 0.0


def test_init_bounds_and_determinism():
    sizes = [10, 20, 5]
    a = Mlp.init(sizes, np.random.default_rng(7))
    b = Mlp.init(sizes, np.random.default_rng(7))
    for Wa, Wb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(Wa.data, Wb.data)
    for i, (n_in, _) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(n_in)
        assert np.max(np.abs(a.weights[i].data)) <= bound
        assert np.max(np.abs(a.biases[i].data)) <= bound
    # not degenerate
    assert np.std(a.weights[0].data) > 0.0


def test_shape_errors():
    rng = np.random.default_rng(11)
    net, _ = random_net(rng, [3, 4, 2])
    with pytest.raises(UsageError):
        net.forward(rng.standard_normal((5, 4)))
    with pytest.raises(UsageError):
        Mlp([Tensor(np.zeros((3, 4))), Tensor(np.zeros((5, 2)))],
            [Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 2)))])
    with pytest.raises(UsageError):
        Mlp.init([5], rng)


def test_gradients_reach_all_parameters():
    rng = np.random.default_rng(13)
    net, _ = random_net(rng, [3, 6, 4])
    X = rng.standard_normal((8, 3))
    with Tape() as tape:
        out = net.forward(X)
        import latentgraph.tensor as tg

        loss = tg.tensor_sum(tg.multiply(out, out))
        grads = tape.backward(loss)
    for p in net.parameters():
        g = grads[p]
        assert g.shape == p.shape
        assert np.any(g != 0.0)


def test_weights_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(17)
    net, _ = random_net(rng, [4, 7, 7, 3])
    path = tmp_path / "weights.txt"
    save_weights(net, path)
    loaded = load_weights(path)
    assert loaded.layer_sizes == net.layer_sizes
    for a, b in zip(net.parameters(), loaded.parameters()):
        assert np.array_equal(a.data, b.data)


def test_weights_file_errors(tmp_path):
    good = tmp_path / "w.txt"
    net, _ = random_net(np.random.default_rng(19), [2, 3, 2])
    save_weights(net, good)
    lines = good.read_text().splitlines()

    bad = tmp_path / "bad_header.txt"
    bad.write_text("sizes 2 3 2\n")
    with pytest.raises(FormatError, match="header"):
        load_weights(bad)

    trunc = tmp_path / "trunc.txt"
    trunc.write_text("\n".join(lines[:3]) + "\n")
    with pytest.raises(FormatError):
        load_weights(trunc)

    nonnum = tmp_path / "nonnum.txt"
    corrupted = list(lines)
    corrupted[2] = corrupted[2].replace(corrupted[2].split()[0], "x", 1)
    nonnum.write_text("\n".join(corrupted) + "\n")
    with pytest.raises(FormatError, match="nonnum.txt:3"):
        load_weights(nonnum)

    trailing = tmp_path / "trailing.txt"
    trailing.write_text("\n".join(lines) + "\nextra stuff\n")
    with pytest.raises(FormatError, match="trailing"):
        load_weights(trailing)


def test_replace_parameters_checks_shapes():
    rng = np.random.default_rng(23)
    net, _ = random_net(rng, [3, 4, 2])
    params = [Tensor(p.data * 0.5) for p in net.parameters()]
    net.replace_parameters(params)
    assert net.weights[0] is params[0]
    from latentgraph.errors import ShapeError

    bad = list(params)
    bad[0] = Tensor(np.zeros((4, 3)))
    with pytest.raises(ShapeError):
        net.replace_parameters(bad)
    with pytest.raises(UsageError):
        net.replace_parameters(params[:-1])


def test_predict_and_accuracy():
    # identity-ish net: class = argmax of input columns
    W = np.eye(3)
    net = Mlp([Tensor(W)], [Tensor(np.zeros((1, 3)))])
    X = np.array([[3.0, 1.0, 0.0], [0.0, 2.0, 5.0], [1.0, 9.0, 2.0]])
    y = np.array([0, 2, 1])
    assert np.array_equal(predict_classes(net, X), y)
    assert accuracy(net, X, y) == 1.0
    assert accuracy(net, X, np.array([0, 2, 0])) == pytest.approx(2.0 / 3.0)
