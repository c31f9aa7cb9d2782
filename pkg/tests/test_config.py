import os

import pytest

from latentgraph.config import (
    ExperimentConfig,
    build_config,
    config_field_names,
    load_config,
    parse_config_text,
    require_file,
)
from latentgraph.errors import ConfigError


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults_round_trip():
    cfg = build_config({})
    assert cfg.dataset_kind == "blobs"
    assert cfg.objective_kind == "cross-entropy"
    assert cfg.graph_k == 5
    assert cfg.graph_normalize is None
    assert cfg.resolved_normalize() is False


def test_parse_comments_blanks_and_values():
    raw = parse_config_text(
        """
# full-line comment
dataset.kind = rings   # trailing comment
optimizer.epochs = 12

graph.bandwidth = 0.5
"""
    )
    assert raw == {"dataset.kind": "rings", "optimizer.epochs": "12", "graph.bandwidth": "0.5"}


def test_syntax_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("dataset.kind = blobs\nnot a key value line\n")
    with pytest.raises(ConfigError, match="line 1.*unknown"):
        parse_config_text("dataset.sort = up\n")
    with pytest.raises(ConfigError, match="line 3.*duplicate"):
        parse_config_text("run.seed = 1\n\nrun.seed = 2\n")
    with pytest.raises(ConfigError, match="empty value"):
        parse_config_text("run.seed =\n")


def test_typed_conversions():
    cfg = build_config(
        {
            "model.hidden": "64, 32,16",
            "teacher.pairs": "1:1, 3:2",
            "graph.normalize": "true",
            "optimizer.lr_decay": "false",
            "graph.bandwidth": "median",
        }
    )
    assert cfg.hidden == (64, 32, 16)
    assert cfg.teacher_pairs == ((1, 1), (3, 2))
    assert cfg.graph_normalize is True
    assert cfg.resolved_normalize() is True
    assert cfg.lr_decay is False
    assert cfg.graph_bandwidth == "median"


def test_conversion_errors_name_the_key():
    with pytest.raises(ConfigError, match="optimizer.epochs"):
        build_config({"optimizer.epochs": "many"})
    with pytest.raises(ConfigError, match="teacher.pairs"):
        build_config({"teacher.pairs": "1-2"})
    with pytest.raises(ConfigError, match="graph.bandwidth"):
        build_config({"graph.bandwidth": "narrow"})


def test_validation_rules():
    with pytest.raises(ConfigError, match="batch_size must exceed graph.k"):
        build_config({"optimizer.batch_size": "4", "graph.k": "8"})
    with pytest.raises(ConfigError, match="classes"):
        build_config({"dataset.classes": "1"})
    with pytest.raises(ConfigError, match="teacher.weights"):
        build_config({"objective.kind": "distill"})
    with pytest.raises(ConfigError, match="train_path"):
        build_config({"dataset.kind": "csv"})
    with pytest.raises(ConfigError, match="test_fraction"):
        build_config({"dataset.test_fraction": "1.5"})


def test_normalize_default_depends_on_objective():
    # distillation compares graphs across networks, which needs the
    # scale-free normalized adjacency; everything else defaults to raw
    distill = build_config({"objective.kind": "distill", "teacher.weights": "t.txt"})
    assert distill.resolved_normalize() is True
    plain = build_config({})
    assert plain.resolved_normalize() is False
    forced = build_config(
        {"objective.kind": "distill", "teacher.weights": "t.txt", "graph.normalize": "false"}
    )
    assert forced.resolved_normalize() is False


def test_paths_resolve_relative_to_config_file(tmp_path):
    sub = tmp_path / "sub"
    sub.mkdir()
    path = write(sub, "eval.weights = w.txt\nrun.out = results\n")
    cfg = load_config(path)
    assert cfg.eval_weights == str(sub / "w.txt")
    assert cfg.out_dir == str(sub / "results")


def test_overrides_win_and_are_validated(tmp_path):
    path = write(tmp_path, "run.seed = 1\n")
    cfg = load_config(path, {"run.seed": "99"})
    assert cfg.seed == 99
    with pytest.raises(ConfigError, match="unknown override"):
        load_config(path, {"run.sed": "99"})


def test_raw_text_preserved(tmp_path):
    text = "# keep me\nrun.seed = 5\n"
    cfg = load_config(write(tmp_path, text))
    assert cfg.raw_text == text


def test_missing_config_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "absent.cfg"))


def test_require_file(tmp_path):
    existing = write(tmp_path, "x")
    assert require_file(existing, "eval.weights") == existing
    with pytest.raises(ConfigError, match="missing required"):
        require_file(None, "eval.weights")
    with pytest.raises(ConfigError, match="not found"):
        require_file(str(tmp_path / "gone.txt"), "eval.weights")


def test_every_registered_key_maps_to_a_field():
    fields = set(config_field_names())
    from latentgraph.config import _KEYS

    for key, (attr, _, _) in _KEYS.items():
        assert attr in fields, key
