"""Datasets: synthetic generators, CSV/IDX ingestion, stratified batching.

All generators are deterministic per seed (one SeedSequence-derived stream,
fixed draw order). Both splits of a Dataset must contain every class, since
the objectives need inter-class pairs in every evaluation.
"""

from __future__ import annotations

import csv
import warnings
from typing import List, Optional, Tuple, Union

import numpy as np

from .errors import DegenerateInputError, FormatError, UsageError

RING_RADII = (1.0, 2.0)


class Dataset:
    """Train/test feature matrices with integer class labels."""

    def __init__(self, train_x, train_y, test_x, test_y):
        self.train_x = np.ascontiguousarray(np.asarray(train_x, dtype=np.float64))
        self.train_y = np.asarray(train_y, dtype=np.int64).ravel()
        self.test_x = np.ascontiguousarray(np.asarray(test_x, dtype=np.float64))
        self.test_y = np.asarray(test_y, dtype=np.int64).ravel()
        for name, X, y in (("train", self.train_x, self.train_y), ("test", self.test_x, self.test_y)):
            if X.ndim != 2 or X.shape[0] == 0:
                raise UsageError(f"{name} features must be a nonempty 2-D matrix, got {X.shape}")
            if X.shape[0] != y.shape[0]:
                raise UsageError(f"{name}: {X.shape[0]} feature rows vs {y.shape[0]} labels")
            if not np.all(np.isfinite(X)):
                raise UsageError(f"{name} features contain non-finite values")
        if self.train_x.shape[1] != self.test_x.shape[1]:
            raise UsageError("train and test feature dimensions differ")
        if self.train_y.min() < 0 or self.test_y.min() < 0:
            raise UsageError("class labels must be nonnegative")
        C = int(max(self.train_y.max(), self.test_y.max())) + 1
        for name, y in (("train", self.train_y), ("test", self.test_y)):
            present = np.unique(y)
            if present.size != C:
                missing = sorted(set(range(C)) - set(present.tolist()))
                raise DegenerateInputError(f"class {missing[0]} absent from {name} split")
        self.num_classes = C

    @property
    def dim(self) -> int:
        return self.train_x.shape[1]

    @property
    def n_train(self) -> int:
        return self.train_x.shape[0]

    @property
    def n_test(self) -> int:
        return self.test_x.shape[0]

    def feature_ranges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-feature (min, max) over the training split; the valid data box."""
        return self.train_x.min(axis=0), self.train_x.max(axis=0)


def feature_std(features: np.ndarray) -> float:
    """Single scalar scale of a feature matrix: std over all entries."""
    s = float(np.std(np.asarray(features, dtype=np.float64)))
    if s == 0.0:
        raise DegenerateInputError("features are constant; scale undefined")
    return s


# ---------------------------------------------------------------------------
# synthetic generators


def simplex_unit_vectors(C: int, dim: int) -> np.ndarray:
    """C maximally spread unit vectors in R^dim (pairwise dot -1/(C-1)).

    Rows 1..C-1 of the Helmert matrix are an orthonormal basis of the
    hyperplane orthogonal to the all-ones vector; projecting the standard
    basis onto it and normalizing gives the regular simplex. Needs
    C <= dim + 1.
    """
    if C > dim + 1:
        raise UsageError(f"simplex layout impossible: {C} classes need dim >= {C - 1}")
    H = np.zeros((C - 1, C))
    for k in range(1, C):
        H[k - 1, :k] = 1.0
        H[k - 1, k] = -float(k)
        H[k - 1] /= np.sqrt(k * (k + 1.0))
    out = np.zeros((C, dim))
    out[:, : C - 1] = H.T / np.sqrt(1.0 - 1.0 / C)
    return out


def make_blobs(
    C: int,
    per_class: int,
    dim: int,
    separation: float,
    seed: int,
    test_per_class: Optional[int] = None,
    layout: str = "auto",
) -> Dataset:
    """Isotropic unit-variance Gaussian classes centered at separation * u_c.

    Centers u_c are unit vectors: a regular simplex when C <= dim + 1, else
    (layout="auto") random unit directions with a warning. layout="simplex"
    makes the impossible case a hard error.
    """
    if C < 2 or dim < 2 or per_class < 1:
        raise UsageError(f"need C >= 2, dim >= 2, per_class >= 1; got {C}, {dim}, {per_class}")
    if separation < 0:
        raise UsageError("separation must be nonnegative")
    if layout not in ("auto", "simplex", "random"):
        raise UsageError(f"unknown center layout {layout!r}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if layout == "simplex" or (layout == "auto" and C <= dim + 1):
        centers = simplex_unit_vectors(C, dim)
    else:
        if layout == "auto":
            warnings.warn(
                f"{C} classes exceed dim+1={dim + 1}; falling back to random unit centers",
                RuntimeWarning,
            )
        raw = rng.standard_normal((C, dim))
        centers = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    test_per_class = per_class if test_per_class is None else int(test_per_class)
    splits = []
    for count in (per_class, test_per_class):
        X = np.vstack([separation * centers[c] + rng.standard_normal((count, dim)) for c in range(C)])
        y = np.repeat(np.arange(C), count)
        splits.append((X, y))
    return Dataset(splits[0][0], splits[0][1], splits[1][0], splits[1][1])


def make_rings(
    per_class: int,
    noise: float,
    seed: int,
    test_per_class: Optional[int] = None,
) -> Dataset:
    """Two concentric circles (radii 1 and 2) with Gaussian radial noise."""
    if per_class < 1:
        raise UsageError("per_class must be >= 1")
    if noise < 0:
        raise UsageError("noise must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    test_per_class = per_class if test_per_class is None else int(test_per_class)
    splits = []
    for count in (per_class, test_per_class):
        parts = []
        for radius in RING_RADII:
            theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
            r = radius + noise * rng.standard_normal(count)
            parts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
        X = np.vstack(parts)
        y = np.repeat(np.arange(2), count)
        splits.append((X, y))
    return Dataset(splits[0][0], splits[0][1], splits[1][0], splits[1][1])


# ---------------------------------------------------------------------------
# file ingestion


def _remap_labels(raw: List[float], where: str) -> np.ndarray:
    vals = np.array(raw)
    if not np.all(vals == np.round(vals)):
        raise FormatError(f"{where}: labels must be integers")
    vals = vals.astype(np.int64)
    distinct = np.unique(vals)
    lookup = {v: i for i, v in enumerate(distinct.tolist())}
    return np.array([lookup[v] for v in vals.tolist()], dtype=np.int64)


def _read_csv(path, label_column: str) -> Tuple[np.ndarray, np.ndarray]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise FormatError(f"{path}:1: label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(cell) for cell in row]
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: non-numeric value ({e})") from None
            labels.append(values[label_idx])
            feats.append([v for i, v in enumerate(values) if i != label_idx])
    if not feats:
        raise FormatError(f"{path}: no data rows")
    return np.array(feats), _remap_labels(labels, str(path))


def _stratified_split(X, y, test_fraction: float, seed: int) -> Dataset:
    if not 0.0 < test_fraction < 1.0:
        raise UsageError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    train_idx, test_idx = [], []
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        if members.size < 2:
            raise DegenerateInputError(f"class {int(c)} has {members.size} sample(s); cannot split")
        members = rng.permutation(members)
        n_test = min(members.size - 1, max(1, int(round(test_fraction * members.size))))
        test_idx.extend(members[:n_test].tolist())
        train_idx.extend(members[n_test:].tolist())
    train_idx = np.sort(np.array(train_idx))
    test_idx = np.sort(np.array(test_idx))
    return Dataset(X[train_idx], y[train_idx], X[test_idx], y[test_idx])


def load_csv_dataset(
    path,
    label_column: str,
    test_path=None,
    test_fraction: float = 0.25,
    seed: int = 0,
) -> Dataset:
    """Load a dataset from CSV (header required; label column by name).

    Features are every non-label column parsed as float; distinct label
    values map to class indices 0..C-1 in sorted order. With no test_path
    the file is split stratified by class, deterministically per seed.
    """
    X, y = _read_csv(path, label_column)
    if test_path is not None:
        Xt, yt = _read_csv(test_path, label_column)
        if Xt.shape[1] != X.shape[1]:
            raise FormatError(f"{test_path}: {Xt.shape[1]} feature columns vs {X.shape[1]} in {path}")
        return Dataset(X, y, Xt, yt)
    return _stratified_split(X, y, test_fraction, seed)


_IDX_MAGIC_IMAGES = 0x00000803
_IDX_MAGIC_LABELS = 0x00000801


def _read_idx(path, magic: int) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    if len(blob) < 4:
        raise FormatError(f"{path}: truncated at byte {len(blob)}, no magic number")
    got = int.from_bytes(blob[0:4], "big")
    if got != magic:
        raise FormatError(f"{path}: bad magic 0x{got:08x} at byte 0, expected 0x{magic:08x}")
    ndim = blob[3]
    header_end = 4 + 4 * ndim
    if len(blob) < header_end:
        raise FormatError(f"{path}: truncated at byte {len(blob)} inside dimension header")
    dims = [int.from_bytes(blob[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim)]
    count = int(np.prod(dims))
    if len(blob) != header_end + count:
        raise FormatError(
            f"{path}: payload is {len(blob) - header_end} bytes at byte {header_end}, expected {count}"
        )
    return np.frombuffer(blob, dtype=np.uint8, offset=header_end).reshape(dims)


def load_idx_pair(
    images_path,
    labels_path,
    test_images_path=None,
    test_labels_path=None,
    test_fraction: float = 0.25,
    seed: int = 0,
) -> Dataset:
    """Load big-endian IDX image/label files; pixels scaled to [0, 1].

    With only one pair the data is split stratified by class; with a test
    pair both splits are taken as given.
    """

    def one_pair(ip, lp):
        images = _read_idx(ip, _IDX_MAGIC_IMAGES)
        labels = _read_idx(lp, _IDX_MAGIC_LABELS)
        if images.shape[0] != labels.shape[0]:
            raise FormatError(f"{ip} has {images.shape[0]} images but {lp} has {labels.shape[0]} labels")
        X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
        return X, labels.astype(np.int64)

    X, y = one_pair(images_path, labels_path)
    if (test_images_path is None) != (test_labels_path is None):
        raise UsageError("test images and test labels must be given together")
    if test_images_path is not None:
        Xt, yt = one_pair(test_images_path, test_labels_path)
        return Dataset(X, y, Xt, yt)
    return _stratified_split(X, y, test_fraction, seed)


# ---------------------------------------------------------------------------
# batching


def stratified_batches(
    features: np.ndarray,
    labels: np.ndarray,
    batch_size: int,
    rng: Union[int, np.random.Generator],
) -> List[np.ndarray]:
    """Partition one epoch into batches that each contain >= 2 classes.

    Per-class index queues are shuffled and interleaved round-robin in a
    shuffled class order, then chunked; a single-class tail chunk is merged
    into its predecessor. Returns index arrays into the given split; the
    multiset of emitted indices is exactly the whole split.
    """
    y = np.asarray(labels)
    N = y.shape[0]
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateInputError("stratified batching needs at least two classes")
    if batch_size < 2 * classes.size:
        raise UsageError(f"batch_size {batch_size} < 2 * {classes.size} classes")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(np.random.SeedSequence(int(rng)))
    order = rng.permutation(classes.size)
    queues = [rng.permutation(np.flatnonzero(y == classes[ci])) for ci in order]
    seq = np.empty(N, dtype=np.int64)
    positions = [0] * len(queues)
    written = 0
    while written < N:
        for qi, q in enumerate(queues):
            if positions[qi] < q.size:
                seq[written] = q[positions[qi]]
                positions[qi] += 1
                written += 1
    chunks = [seq[i : i + batch_size].copy() for i in range(0, N, batch_size)]
    while len(chunks) > 1 and np.unique(y[chunks[-1]]).size < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    for chunk in chunks:
        if np.unique(y[chunk]).size < 2:
            raise DegenerateInputError("class imbalance too extreme for multi-class batches")
    return chunks
