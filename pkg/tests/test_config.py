import json
from pathlib import Path

import pytest

from treekd.cli import bundled_dataset
from treekd.config import RunConfig, config_from_dict, interpolate, load_config
from treekd.errors import ConfigError

AMES_CSV = bundled_dataset("mini_ames.csv")


def base(**over):
    raw = {"dataset_path": str(AMES_CSV), "property_name": "Ames Mutagenicity"}
    raw.update(over)
    return raw


def test_defaults():
    cfg = config_from_dict(base())
    assert cfg.forest.n_trees == 50 and cfg.ensemble_n == 50
    assert cfg.forest.max_depth == 6 and cfg.forest.min_samples_split == 2 and cfg.forest.min_samples_leaf == 1
    assert cfg.split.ratios == (0.7, 0.1, 0.2)
    assert cfg.predictor.kind == "stub" and cfg.predictor.concurrency == 8 and cfg.predictor.retries == 3
    assert cfg.ensemble.mode == "rule" and cfg.ensemble.temperature == 0.0
    assert cfg.spec.metric == "AUROC"


def test_load_and_relative_paths(tmp_path):
    (tmp_path / "data.csv").write_text("smiles,label\nCCO,1\n", encoding="utf-8")
    (tmp_path / "cfg.json").write_text(
        json.dumps({"dataset_path": "data.csv", "property_name": "ames mutagenicity", "output_dir": "results"}), encoding="utf-8"
    )
    cfg = load_config(tmp_path / "cfg.json")
    assert cfg.dataset_path == tmp_path / "data.csv"
    assert cfg.output_dir == tmp_path / "results"
    assert cfg.spec.name == "Ames Mutagenicity"


def test_env_interpolation(monkeypatch):
    monkeypatch.setenv("TREEKD_TEST_MODEL", "my-model")
    cfg = config_from_dict(base(predictor={"kind": "http", "endpoint": "http://x/v1", "model": "${TREEKD_TEST_MODEL}"}))
    assert cfg.predictor.model == "my-model"
    monkeypatch.delenv("TREEKD_TEST_MODEL")
    with pytest.raises(ConfigError, match="TREEKD_TEST_MODEL"):
        interpolate({"a": ["${TREEKD_TEST_MODEL}"]})


def test_seed_and_output_overrides():
    cfg = config_from_dict(base()).with_seed(7).with_output_dir("elsewhere")
    assert (cfg.prompt_seed, cfg.split.seed, cfg.forest.seed, cfg.ensemble.sample_seed) == (7, 7, 7, 7)
    assert cfg.output_dir == Path("elsewhere")


def test_to_json_reloads():
    cfg = config_from_dict(base(forest={"n_trees": 5}, ensemble={"n": 3}))
    again = config_from_dict(json.loads(json.dumps(cfg.to_json())))
    assert again == cfg
    assert isinstance(again, RunConfig)


@pytest.mark.parametrize(
    "over, fragment",
    [
        ({"property_name": "Boiling Point"}, "Boiling Point"),
        ({"dataset_path": "/nonexistent/x.csv"}, "dataset file not found"),
        ({"library_path": "/nonexistent/lib.tsv"}, "/nonexistent/lib.tsv"),
        ({"forest": {"n_trees": 0}}, "n_trees"),
        ({"forest": {"max_depth": 0}}, "max_depth"),
        ({"forest": {"trees": 3}}, "unknown key"),
        ({"colour": "red"}, "unknown config key"),
        ({"ensemble": {"mode": "vote"}}, "mode"),
        ({"ensemble": {"n": 60}}, "exceeds"),
        ({"ensemble": {"n": 0}}, ">= 1"),
        ({"ensemble": {"mode": "self", "temperature": 0.0}}, "temperature > 0"),
        ({"ensemble": {"mode": "self", "temperature": 0.7}}, "stub"),
        ({"predictor": {"kind": "grpc"}}, "kind"),
        ({"predictor": {"kind": "http"}}, "endpoint"),
        ({"predictor": {"concurrency": 0}}, "concurrency"),
        ({"split": "70/10/20"}, "expected an object"),
    ],
)
def test_validation_errors(over, fragment):
    with pytest.raises(ConfigError, match=fragment):
        config_from_dict(base(**over))


def test_self_mode_with_http_is_allowed():
    cfg = config_from_dict(
        base(
            predictor={"kind": "http", "endpoint": "http://localhost:1/v1", "model": "m"},
            ensemble={"mode": "self", "temperature": 0.8, "n": 10},
        )
    )
    assert cfg.ensemble_n == 10


def test_missing_keys_and_bad_files(tmp_path):
    with pytest.raises(ConfigError, match="property_name"):
        config_from_dict({"dataset_path": str(AMES_CSV)})
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.json")
    (tmp_path / "bad.json").write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        config_from_dict([1, 2])
