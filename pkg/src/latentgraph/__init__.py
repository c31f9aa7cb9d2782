"""Latent geometry graphs over batches of network representations.

Build k-nearest-neighbor similarity graphs on intermediate representations,
measure graph-signal and label variation on them, and use those measures as
differentiable objectives: graph knowledge distillation, label-variation
embedding training and layer-wise smoothness regularization. Ships with a
small reverse-mode autodiff engine, an MLP/dataset toolkit and an experiment
harness CLI.
"""

from .errors import (
    ConfigError,
    DegenerateInputError,
    FormatError,
    LatentGraphError,
    NumericError,
    ShapeError,
    UsageError,
)
from .tensor import Tape, Tensor, finite_diff_check, finite_diff_check_multi, set_checked
from .graphs import (
    GraphParams,
    LatentGraph,
    build_from_params,
    build_lgg,
    eigenmap_coords,
    label_variation,
    normalized_label_variation,
    signal_variation,
)
from .models import Mlp, load_weights, save_weights
from .data import Dataset, make_blobs, make_rings, stratified_batches
from .objectives import (
    LayerPairing,
    ObjectiveWeights,
    cross_entropy_loss,
    distillation_objective,
    gkd_loss,
    label_variation_loss,
    smoothness_regularizer,
)
from .robustness import corruption_eval, fgsm_attack, fgsm_error, relative_mce
from .config import ExperimentConfig, load_config
from .train import EvalReport, RunRecord, distill, evaluate, train
from .reports import InspectReport, graph_inspect
from .gradcheck import CheckResult, run_gradient_suite

__version__ = "0.1.0"

__all__ = [
    "Tape",
    "Tensor",
    "finite_diff_check",
    "finite_diff_check_multi",
    "set_checked",
    "LatentGraphError",
    "ShapeError",
    "NumericError",
    "UsageError",
    "DegenerateInputError",
    "ConfigError",
    "FormatError",
    "GraphParams",
    "LatentGraph",
    "build_lgg",
    "build_from_params",
    "signal_variation",
    "label_variation",
    "normalized_label_variation",
    "eigenmap_coords",
    "Mlp",
    "save_weights",
    "load_weights",
    "Dataset",
    "make_blobs",
    "make_rings",
    "stratified_batches",
    "LayerPairing",
    "ObjectiveWeights",
    "cross_entropy_loss",
    "gkd_loss",
    "distillation_objective",
    "label_variation_loss",
    "smoothness_regularizer",
    "fgsm_attack",
    "fgsm_error",
    "corruption_eval",
    "relative_mce",
    "ExperimentConfig",
    "load_config",
    "train",
    "distill",
    "evaluate",
    "RunRecord",
    "EvalReport",
    "graph_inspect",
    "InspectReport",
    "run_gradient_suite",
    "CheckResult",
    "__version__",
]
