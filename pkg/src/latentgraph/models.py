"""Dense networks as stacks of matmul+bias blocks with ReLU between blocks.

A network is a list of blocks; block i maps width layer_sizes[i] to
layer_sizes[i+1]. ReLU is applied between blocks and not after the last one,
so the final entry of a trace is the raw output (logits for classifiers,
coordinates for embedding nets). Parameters are held as immutable tensors;
an update step replaces them wholesale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from . import tensor as tg
from .errors import FormatError, ShapeError, UsageError
from .tensor import Tensor


@dataclass(frozen=True)
class ActivationTrace:
    """Per-layer batch representations: the input, then one entry per block.

    ``blocks[-1]`` is the network output. All entries may live on the active
    tape, so objectives over intermediate representations stay differentiable.
    """

    input: Tensor
    blocks: List[Tensor]

    @property
    def representations(self) -> List[Tensor]:
        return [self.input] + list(self.blocks)

    @property
    def logits(self) -> Tensor:
        return self.blocks[-1]

    def __len__(self) -> int:
        return 1 + len(self.blocks)


class Mlp:
    """Fully-connected network. ``weights[i]`` has shape (n_i, n_{i+1});
    biases are (1, n_{i+1}) rows added to every sample."""

    def __init__(self, weights: Sequence[Tensor], biases: Sequence[Tensor]):
        if len(weights) != len(biases) or not weights:
            raise UsageError("need one bias per weight matrix and at least one block")
        sizes = [weights[0].shape[0]]
        for i, (W, b) in enumerate(zip(weights, biases)):
            if W.data.ndim != 2 or b.shape != (1, W.shape[1]):
                raise UsageError(f"block {i}: weight {W.shape} and bias {b.shape} do not conform")
            if W.shape[0] != sizes[-1]:
                raise UsageError(f"block {i}: input width {W.shape[0]} != previous output {sizes[-1]}")
            sizes.append(W.shape[1])
        self.weights = list(weights)
        self.biases = list(biases)
        self.layer_sizes = tuple(sizes)

    @classmethod
    def init(cls, layer_sizes: Sequence[int], rng: np.random.Generator) -> "Mlp":
        """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per block."""
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise UsageError(f"layer_sizes needs at least input and output dims, got {layer_sizes}")
        weights, biases = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(n_in)
            weights.append(Tensor(rng.uniform(-bound, bound, size=(n_in, n_out))))
            biases.append(Tensor(rng.uniform(-bound, bound, size=(1, n_out))))
        return cls(weights, biases)

    @property
    def num_blocks(self) -> int:
        return len(self.weights)

    def parameters(self) -> List[Tensor]:
        out: List[Tensor] = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def replace_parameters(self, params: Sequence[Tensor]) -> None:
        if len(params) != 2 * self.num_blocks:
            raise UsageError(f"expected {2 * self.num_blocks} parameter tensors, got {len(params)}")
        for i in range(self.num_blocks):
            W, b = params[2 * i], params[2 * i + 1]
            if W.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ShapeError("replace_parameters", W.shape, self.weights[i].shape)
            self.weights[i] = W
            self.biases[i] = b

    def forward(self, batch: Union[Tensor, np.ndarray]) -> Tensor:
        return self.forward_traced(batch).logits

    def forward_traced(self, batch: Union[Tensor, np.ndarray]) -> ActivationTrace:
        x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch, dtype=np.float64))
        if x.data.ndim != 2 or x.shape[1] != self.layer_sizes[0]:
            raise UsageError(f"batch shape {x.shape} does not match input width {self.layer_sizes[0]}")
        blocks: List[Tensor] = []
        h = x
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = tg.add_row(tg.matmul(h, W), b)
            if i < self.num_blocks - 1:
                h = tg.relu(h)
            blocks.append(h)
        return ActivationTrace(input=x, blocks=blocks)


def forward_traced(net: Mlp, batch) -> ActivationTrace:
    return net.forward_traced(batch)


def predict_classes(net: Mlp, features: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    return np.argmax(net.forward(Tensor(np.asarray(features, dtype=np.float64))).data, axis=1)


def accuracy(net: Mlp, features: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict_classes(net, features) == np.asarray(labels)))


# ---------------------------------------------------------------------------
# weights file: text header with layer sizes, then per block the row-major
# weight matrix and the bias row, 17 significant digits (float64 round-trip)


def save_weights(net: Mlp, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("layer_sizes " + " ".join(str(s) for s in net.layer_sizes) + "\n")
        for i, (W, b) in enumerate(zip(net.weights, net.biases)):
            fh.write(f"W{i} {W.shape[0]} {W.shape[1]}\n")
            for row in W.data:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
            fh.write(f"b{i} {b.shape[1]}\n")
            fh.write(" ".join(f"{v:.17g}" for v in b.data[0]) + "\n")


def load_weights(path) -> Mlp:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise FormatError(f"cannot read weights file {path}: {e}") from e

    def fail(lineno, msg):
        raise FormatError(f"{path}:{lineno + 1}: {msg}")

    if not lines or not lines[0].startswith("layer_sizes "):
        fail(0, "expected 'layer_sizes ...' header")
    try:
        sizes = [int(tok) for tok in lines[0].split()[1:]]
    except ValueError:
        fail(0, "layer sizes must be integers")
    if len(sizes) < 2:
        fail(0, "need at least two layer sizes")

    pos = 1
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        n_in, n_out = sizes[i], sizes[i + 1]
        if pos >= len(lines) or lines[pos].split() != [f"W{i}", str(n_in), str(n_out)]:
            fail(min(pos, len(lines) - 1), f"expected 'W{i} {n_in} {n_out}'")
        pos += 1
        rows = []
        for r in range(n_in):
            if pos >= len(lines):
                fail(len(lines) - 1, f"weight block W{i} truncated")
            try:
                row = [float(tok) for tok in lines[pos].split()]
            except ValueError:
                fail(pos, "non-numeric weight value")
            if len(row) != n_out:
                fail(pos, f"expected {n_out} values, got {len(row)}")
            rows.append(row)
            pos += 1
        weights.append(Tensor(np.array(rows)))
        if pos >= len(lines) or lines[pos].split() != [f"b{i}", str(n_out)]:
            fail(min(pos, len(lines) - 1), f"expected 'b{i} {n_out}'")
        pos += 1
        if pos >= len(lines):
            fail(len(lines) - 1, f"bias b{i} truncated")
        try:
            brow = [float(tok) for tok in lines[pos].split()]
        except ValueError:
            fail(pos, "non-numeric bias value")
        if len(brow) != n_out:
            fail(pos, f"expected {n_out} values, got {len(brow)}")
        biases.append(Tensor(np.array(brow).reshape(1, -1)))
        pos += 1
    if pos != len(lines) and any(line.strip() for line in lines[pos:]):
        fail(pos, "trailing content after last block")
    return Mlp(weights, biases)
