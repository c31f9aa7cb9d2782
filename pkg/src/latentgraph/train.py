"""Experiment pipelines: train, distill, evaluate.

Seed discipline: one SeedSequence per run, spawned into four independent
streams (dataset, parameter init, batch order, evaluation draws), consumed
in a fixed order. Identical config+seed therefore reproduces every artifact
byte for byte, and a distillation run with lambda_kd = 0 walks exactly the
same compute path as a plain training run, ending at bit-identical weights.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .config import ExperimentConfig, require_file
from .data import (
    Dataset,
    feature_std,
    load_csv_dataset,
    load_idx_pair,
    make_blobs,
    make_rings,
    stratified_batches,
)
from .errors import ConfigError, NumericError, UsageError
from .graphs import GraphParams, build_from_params, normalized_label_variation
from .models import Mlp, load_weights, predict_classes, save_weights
from .objectives import (
    LayerPairing,
    ObjectiveWeights,
    cross_entropy_loss,
    distillation_objective,
    gkd_loss,
    label_variation_loss,
    smoothness_regularizer,
)
from .robustness import (
    corruption_table,
    fgsm_attack,
    generate_corruptions,
    relative_mce,
    write_corruption_table,
)
from . import tensor as tg
from .tensor import Tape, Tensor


def layer_names(num_blocks: int) -> List[str]:
    return ["input"] + [f"block{i}" for i in range(1, num_blocks + 1)]


def derive_streams(seed: int):
    """(dataset, init, batches, eval) independent child sequences."""
    return np.random.SeedSequence(seed).spawn(4)


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def build_dataset(cfg: ExperimentConfig, data_ss: np.random.SeedSequence) -> Dataset:
    seed = _seed_int(data_ss)
    if cfg.dataset_kind == "blobs":
        return make_blobs(
            C=cfg.classes,
            per_class=cfg.per_class,
            dim=cfg.dim,
            separation=cfg.separation,
            seed=seed,
            test_per_class=cfg.test_per_class,
            layout=cfg.layout,
        )
    if cfg.dataset_kind == "rings":
        return make_rings(
            per_class=cfg.per_class, noise=cfg.noise, seed=seed, test_per_class=cfg.test_per_class
        )
    if cfg.dataset_kind == "csv":
        return load_csv_dataset(
            require_file(cfg.train_path, "dataset.train_path"),
            cfg.label_column,
            test_path=cfg.test_path,
            test_fraction=cfg.test_fraction,
            seed=seed,
        )
    return load_idx_pair(
        require_file(cfg.train_path, "dataset.train_path"),
        require_file(cfg.labels_path, "dataset.labels_path"),
        test_images_path=cfg.test_path,
        test_labels_path=cfg.test_labels_path,
        test_fraction=cfg.test_fraction,
        seed=seed,
    )


def graph_params(cfg: ExperimentConfig) -> GraphParams:
    return GraphParams(
        k=cfg.graph_k,
        similarity=cfg.graph_similarity,
        normalize=cfg.resolved_normalize(),
        bandwidth=cfg.graph_bandwidth,
    )


def count_parameters(net: Mlp) -> int:
    return sum(p.size for p in net.parameters())


# ---------------------------------------------------------------------------
# predictors


def knn_predictor(net: Mlp, train_x: np.ndarray, train_y: np.ndarray, k: int) -> Callable:
    """Majority vote over the k nearest training embeddings in the net's
    output space. The decision rule for embedding objectives, which produce
    no logits. Distance ties resolve to the lower training index, vote ties
    to the smaller label."""
    if k < 1:
        raise UsageError(f"knn predictor needs k >= 1, got {k}")
    k = min(k, len(train_y))
    ref = net.forward(Tensor(train_x)).data
    labels = np.asarray(train_y)

    def predict(X: np.ndarray) -> np.ndarray:
        e = net.forward(Tensor(np.asarray(X, dtype=np.float64))).data
        d2 = ((e[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2)
        votes = labels[np.argsort(d2, kind="stable", axis=1)[:, :k]]
        out = np.empty(len(votes), dtype=labels.dtype)
        for i, row in enumerate(votes):
            vals, counts = np.unique(row, return_counts=True)
            out[i] = vals[np.argmax(counts)]
        return out

    return predict


def predictor_for(cfg: ExperimentConfig, net: Mlp, ds: Dataset) -> Callable:
    if cfg.objective_kind == "label-variation":
        return knn_predictor(net, ds.train_x, ds.train_y, cfg.knn_k)
    return lambda X: predict_classes(net, X)


# ---------------------------------------------------------------------------
# training


@dataclass
class RunRecord:
    config: ExperimentConfig
    out_dir: Optional[str]
    columns: List[str]
    metrics: List[dict]
    net: Mlp
    dataset: Dataset
    final_train_acc: float
    final_test_acc: float
    weights_path: Optional[str] = None
    info: dict = field(default_factory=dict)
    baseline: Optional["RunRecord"] = None


def _batch_graph_params(params: GraphParams, batch_size: int) -> GraphParams:
    # ragged tail batches may be smaller than k+1; clamp k rather than fail
    if params.k <= batch_size - 1:
        return params
    return GraphParams(
        k=batch_size - 1,
        similarity=params.similarity,
        normalize=params.normalize,
        bandwidth=params.bandwidth,
    )


def _sigma_sample(cfg: ExperimentConfig, ds: Dataset, eval_rng: np.random.Generator) -> np.ndarray:
    """Fixed batch of test indices used for the per-layer variation columns."""
    want = min(cfg.batch_size, ds.n_test)
    if want < 2 * ds.num_classes:
        return np.arange(ds.n_test)
    return stratified_batches(ds.test_x, ds.test_y, want, eval_rng)[0]


def _sigma_columns(cfg: ExperimentConfig, net: Mlp, ds: Dataset, sample: np.ndarray) -> List[float]:
    trace = net.forward_traced(Tensor(ds.test_x[sample]))
    labels = ds.test_y[sample]
    # normalized label variation is only defined on unnormalized graphs
    p = _batch_graph_params(
        GraphParams(k=cfg.graph_k, similarity=cfg.graph_similarity, normalize=False,
                    bandwidth=cfg.graph_bandwidth),
        sample.size,
    )
    return [
        normalized_label_variation(build_from_params(rep, p), labels).normalized
        for rep in trace.representations
    ]


def _fit(cfg: ExperimentConfig, teacher: Optional[Mlp], pairing: Optional[LayerPairing]) -> RunRecord:
    data_ss, init_ss, batch_ss, eval_ss = derive_streams(cfg.seed)
    ds = build_dataset(cfg, data_ss)
    if teacher is not None and teacher.layer_sizes[0] != ds.dim:
        raise ConfigError(
            f"teacher input width {teacher.layer_sizes[0]} does not match data dim {ds.dim}"
        )
    out_dim = cfg.output_dim if cfg.output_dim is not None else ds.num_classes
    sizes = (ds.dim, *cfg.hidden, out_dim)
    net = Mlp.init(sizes, np.random.default_rng(init_ss))
    batch_rng = np.random.default_rng(batch_ss)
    eval_rng = np.random.default_rng(eval_ss)

    gparams = graph_params(cfg)
    weights = ObjectiveWeights(lambda_kd=cfg.lambda_kd, gamma=cfg.gamma)
    kind = cfg.objective_kind
    use_kd = kind == "distill" and weights.lambda_kd > 0.0
    use_reg = kind == "cross-entropy+regularizer" and weights.gamma > 0.0

    columns = ["epoch", "train_loss", "train_acc", "test_acc"]
    sigma_sample = None
    if use_reg:
        sigma_sample = _sigma_sample(cfg, ds, eval_rng)
        columns += [f"sigma_{name}" for name in layer_names(net.num_blocks)]

    adv_epsilon = None
    clip = None
    if cfg.adversarial_train:
        adv_epsilon = cfg.train_epsilon_scale * feature_std(ds.train_x)
        clip = ds.feature_ranges()

    rows: List[dict] = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate
        if cfg.lr_decay:
            lr = cfg.learning_rate * (1.0 - epoch / cfg.epochs)
        chunks = stratified_batches(ds.train_x, ds.train_y, cfg.batch_size, batch_rng)
        loss_total = 0.0
        for bi, idx in enumerate(chunks):
            Xb = ds.train_x[idx]
            yb = ds.train_y[idx]
            if adv_epsilon is not None:
                Xb = fgsm_attack(net, Xb, yb, adv_epsilon, clip)
            bparams = _batch_graph_params(gparams, idx.size)

            teacher_graphs = {}
            if use_kd:
                t_trace = teacher.forward_traced(Xb)  # constants: outside the tape
                for t_idx, _ in pairing.pairs:
                    teacher_graphs[t_idx] = build_from_params(t_trace.representations[t_idx], bparams)

            try:
                with Tape() as tape:
                    trace = net.forward_traced(Xb)
                    if kind == "label-variation":
                        loss = label_variation_loss(trace.logits, yb, bparams)
                    else:
                        loss = cross_entropy_loss(trace.logits, yb)
                        if use_reg:
                            reg = smoothness_regularizer(trace, yb, bparams)
                            loss = tg.add(loss, tg.scale(reg, weights.gamma))
                        if use_kd:
                            kd_terms = [
                                gkd_loss(teacher_graphs[t],
                                         build_from_params(trace.representations[s], bparams))
                                for t, s in pairing.pairs
                            ]
                            loss = distillation_objective(loss, kd_terms, weights)
                    value = loss.item()
                    if not np.isfinite(value):
                        raise NumericError("loss is not finite")
                    grads = tape.backward(loss)
            except NumericError as e:
                raise NumericError(f"epoch {epoch} batch {bi}: {e}") from e

            net.replace_parameters(
                [Tensor(p.data - lr * grads[p]) for p in net.parameters()]
            )
            loss_total += value * idx.size

        row = {
            "epoch": epoch,
            "train_loss": loss_total / ds.n_train,
        }
        predict = predictor_for(cfg, net, ds)
        row["train_acc"] = float(np.mean(predict(ds.train_x) == ds.train_y))
        row["test_acc"] = float(np.mean(predict(ds.test_x) == ds.test_y))
        if use_reg:
            for name, v in zip(layer_names(net.num_blocks), _sigma_columns(cfg, net, ds, sigma_sample)):
                row[f"sigma_{name}"] = v
        rows.append(row)

    return RunRecord(
        config=cfg,
        out_dir=cfg.out_dir,
        columns=columns,
        metrics=rows,
        net=net,
        dataset=ds,
        final_train_acc=rows[-1]["train_acc"],
        final_test_acc=rows[-1]["test_acc"],
        info={"parameters": count_parameters(net)},
    )


def write_metrics_csv(columns: List[str], rows: List[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = [str(row["epoch"])] + [f"{row[c]:.9g}" for c in columns[1:]]
            fh.write(",".join(cells) + "\n")


def _write_run_outputs(record: RunRecord, prefix: str = "") -> None:
    cfg = record.config
    if cfg.out_dir is None:
        return
    os.makedirs(cfg.out_dir, exist_ok=True)
    if not prefix:
        with open(os.path.join(cfg.out_dir, "config.txt"), "w", encoding="utf-8") as fh:
            fh.write(cfg.raw_text)
    record.weights_path = os.path.join(cfg.out_dir, f"{prefix}weights.txt")
    save_weights(record.net, record.weights_path)
    write_metrics_csv(record.columns, record.metrics, os.path.join(cfg.out_dir, f"{prefix}metrics.csv"))
    from . import plots

    plots.plot_metrics(record.columns, record.metrics, os.path.join(cfg.out_dir, f"{prefix}metrics.png"))


def train(cfg: ExperimentConfig) -> RunRecord:
    """Plain training with the configured objective (anything but distill)."""
    if cfg.objective_kind == "distill":
        raise ConfigError("objective.kind = distill requires the distill command")
    record = _fit(cfg, teacher=None, pairing=None)
    _write_run_outputs(record)
    return record


def _pairing_for(cfg: ExperimentConfig, teacher: Mlp, student_blocks: int) -> LayerPairing:
    try:
        if cfg.teacher_pairs is not None:
            pairing = LayerPairing(cfg.teacher_pairs)
        else:
            pairing = LayerPairing.default(teacher.num_blocks, student_blocks)
        pairing.validate_for(teacher.num_blocks, student_blocks)
    except UsageError as e:
        raise ConfigError(f"teacher/student pairing invalid: {e}") from e
    return pairing


def distill(cfg: ExperimentConfig) -> RunRecord:
    """Knowledge distillation: cross entropy plus lambda_kd times the summed
    graph discrepancies over the configured layer pairings."""
    if cfg.objective_kind != "distill":
        raise ConfigError("distill command requires objective.kind = distill")
    teacher = load_weights(require_file(cfg.teacher_weights, "teacher.weights"))
    student_blocks = len(cfg.hidden) + 1
    pairing = _pairing_for(cfg, teacher, student_blocks)
    record = _fit(cfg, teacher=teacher, pairing=pairing)
    record.info["teacher_parameters"] = count_parameters(teacher)
    record.info["pairs"] = pairing.pairs
    _write_run_outputs(record)
    if cfg.report_baseline:
        from dataclasses import replace

        base_cfg = replace(cfg, objective_kind="cross-entropy")
        baseline = _fit(base_cfg, teacher=None, pairing=None)
        _write_run_outputs(baseline, prefix="baseline_")
        record.baseline = baseline
    return record


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    clean_accuracy: float
    clean_error: float
    fgsm_epsilon: Optional[float]
    fgsm_error: Optional[float]
    table: "object"
    baseline_table: Optional[object]
    rel_mce: Optional[float]


def evaluate(cfg: ExperimentConfig) -> EvalReport:
    """Robustness evaluation of a trained weights file: clean accuracy, FGSM
    error (argmax models), corruption table, and relative MCE when a
    baseline weights file is configured. The dataset is rebuilt from the
    same seed stream the training run used."""
    data_ss, _, _, eval_ss = derive_streams(cfg.seed)
    ds = build_dataset(cfg, data_ss)
    net = load_weights(require_file(cfg.eval_weights, "eval.weights"))
    if net.layer_sizes[0] != ds.dim:
        raise ConfigError(f"weights expect input width {net.layer_sizes[0]}, data has {ds.dim}")
    eval_rng = np.random.default_rng(eval_ss)

    predict = predictor_for(cfg, net, ds)
    clean_acc = float(np.mean(predict(ds.test_x) == ds.test_y))

    fgsm_eps = None
    fgsm_err = None
    if cfg.eval_fgsm and cfg.objective_kind != "label-variation":
        fgsm_eps = cfg.eval_epsilon_scale * feature_std(ds.train_x)
        adv = fgsm_attack(net, ds.test_x, ds.test_y, fgsm_eps, ds.feature_ranges())
        fgsm_err = float(np.mean(predict(adv) != ds.test_y))

    corrupted = generate_corruptions(ds, eval_rng)
    table = corruption_table(predict, corrupted, ds.test_y)

    baseline_table = None
    rel = None
    if cfg.baseline_weights is not None:
        base_net = load_weights(require_file(cfg.baseline_weights, "eval.baseline_weights"))
        base_predict = lambda X: predict_classes(base_net, X)
        baseline_table = corruption_table(base_predict, corrupted, ds.test_y)
        rel = relative_mce(table, baseline_table)

    report = EvalReport(
        clean_accuracy=clean_acc,
        clean_error=1.0 - clean_acc,
        fgsm_epsilon=fgsm_eps,
        fgsm_error=fgsm_err,
        table=table,
        baseline_table=baseline_table,
        rel_mce=rel,
    )
    if cfg.out_dir is not None:
        _write_eval_outputs(cfg, report)
    return report


def _write_eval_outputs(cfg: ExperimentConfig, report: EvalReport) -> None:
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfg.raw_text)
    write_corruption_table(report.table, os.path.join(cfg.out_dir, "corruptions.tsv"))
    if report.baseline_table is not None:
        write_corruption_table(report.baseline_table, os.path.join(cfg.out_dir, "baseline_corruptions.tsv"))
    lines = [
        f"clean_accuracy = {report.clean_accuracy:.9g}",
        f"clean_error = {report.clean_error:.9g}",
    ]
    if report.fgsm_error is not None:
        lines.append(f"fgsm_epsilon = {report.fgsm_epsilon:.9g}")
        lines.append(f"fgsm_error = {report.fgsm_error:.9g}")
    else:
        lines.append("fgsm_error = skipped")
    if report.rel_mce is not None:
        lines.append(f"relative_mce = {report.rel_mce:.9g}")
    with open(os.path.join(cfg.out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    from . import plots

    plots.plot_corruptions(
        report.table, os.path.join(cfg.out_dir, "corruptions.png"), baseline=report.baseline_table
    )
