"""Per-layer graph inspection of a trained network.

Builds the LGG of every trace entry (input and each block) on a stratified
sample of the test split, then writes edge lists, 2-D spectral embeddings,
and a per-layer variation summary. Graphs here are always unnormalized:
normalized label variation is only defined there, and raw edge weights are
what the edge lists are for.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .config import ExperimentConfig, require_file
from .data import stratified_batches
from .errors import UsageError
from .graphs import (
    GraphParams,
    LatentGraph,
    build_from_params,
    eigenmap_coords,
    normalized_label_variation,
    write_edge_list,
    write_eigenmap,
)
from .models import load_weights
from .tensor import Tensor
from .train import build_dataset, derive_streams, layer_names


@dataclass
class LayerRecord:
    name: str
    graph: LatentGraph
    label_variation: float
    normalized_variation: float
    coords: np.ndarray
    eigenvalues: np.ndarray
    zero_multiplicity: int
    edge_count: int


@dataclass
class InspectReport:
    sample: np.ndarray
    labels: np.ndarray
    records: List[LayerRecord]


def graph_inspect(cfg: ExperimentConfig) -> InspectReport:
    data_ss, _, _, eval_ss = derive_streams(cfg.seed)
    ds = build_dataset(cfg, data_ss)
    net = load_weights(require_file(cfg.inspect_weights, "inspect.weights"))
    if net.layer_sizes[0] != ds.dim:
        raise UsageError(f"weights expect input width {net.layer_sizes[0]}, data has {ds.dim}")
    eval_rng = np.random.default_rng(eval_ss)

    want = min(cfg.sample_size, ds.n_test)
    if want < 2 * ds.num_classes:
        raise UsageError(
            f"inspect.sample_size {cfg.sample_size} too small for {ds.num_classes} classes "
            f"(needs at least {2 * ds.num_classes})"
        )
    sample = stratified_batches(ds.test_x, ds.test_y, want, eval_rng)[0]
    labels = ds.test_y[sample]

    params = GraphParams(
        k=min(cfg.graph_k, sample.size - 1),
        similarity=cfg.graph_similarity,
        normalize=False,
        bandwidth=cfg.graph_bandwidth,
    )
    trace = net.forward_traced(Tensor(ds.test_x[sample]))
    names = layer_names(net.num_blocks)

    records: List[LayerRecord] = []
    for name, rep in zip(names, trace.representations):
        graph = build_from_params(rep, params)
        var = normalized_label_variation(graph, labels)
        emap = eigenmap_coords(graph, dim=2)
        edge_count = int(np.count_nonzero(np.triu(graph.values, k=1)))
        records.append(
            LayerRecord(
                name=name,
                graph=graph,
                label_variation=var.raw,
                normalized_variation=var.normalized,
                coords=emap.coords,
                eigenvalues=emap.eigenvalues,
                zero_multiplicity=emap.zero_multiplicity,
                edge_count=edge_count,
            )
        )

    report = InspectReport(sample=sample, labels=labels, records=records)
    if cfg.out_dir is not None:
        _write_inspect_outputs(cfg, report)
    return report


def _write_inspect_outputs(cfg: ExperimentConfig, report: InspectReport) -> None:
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfg.raw_text)
    from . import plots

    for rec in report.records:
        write_edge_list(
            rec.graph,
            os.path.join(cfg.out_dir, f"edges_{rec.name}.tsv"),
            labels=report.labels,
            interclass_only=cfg.interclass_only,
        )
        write_eigenmap(
            rec.coords, report.labels, os.path.join(cfg.out_dir, f"eigenmap_{rec.name}.tsv")
        )
        plots.plot_eigenmap(
            rec.coords,
            report.labels,
            rec.graph.values,
            os.path.join(cfg.out_dir, f"eigenmap_{rec.name}.png"),
            title=rec.name,
        )
    names = [rec.name for rec in report.records]
    plots.plot_variation_by_layer(
        names,
        [rec.label_variation for rec in report.records],
        [rec.normalized_variation for rec in report.records],
        os.path.join(cfg.out_dir, "variation_by_layer.png"),
    )
    lines = [f"sample_size = {report.sample.size}", f"classes = {np.unique(report.labels).size}", ""]
    lines.append("layer\tlabel_variation\tnormalized\tzero_eigenvalues\tedges")
    for rec in report.records:
        lines.append(
            f"{rec.name}\t{rec.label_variation:.9g}\t{rec.normalized_variation:.9g}"
            f"\t{rec.zero_multiplicity}\t{rec.edge_count}"
        )
    with open(os.path.join(cfg.out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
