import json

import pytest

from fairfl.config import (
    Algorithm, ExperimentManifest, InitStrategy, ModelType, ScenarioConfig, ScenarioKind, load_manifest,
    parse_algorithms, read_config_file,
)
from fairfl.errors import ConfigError


def test_defaults_are_valid(default_cfg):
    assert default_cfg.validate() is default_cfg
    assert default_cfg.num_agents == 10
    assert default_cfg.num_clusters == 2
    assert default_cfg.intra_radius == 0.01
    assert default_cfg.inter_distance == 1.0
    assert default_cfg.eval_samples == 1000


def test_json_round_trip(default_cfg):
    cfg = default_cfg.with_overrides(model_kind="ridge_logistic", cluster_split=[7, 2, 1])
    data = json.loads(json.dumps(cfg.to_dict()))
    assert ScenarioConfig.from_dict(data) == cfg
    assert cfg.model_kind == ModelType.RIDGE_LOGISTIC
    assert cfg.cluster_split == (7, 2, 1)


@pytest.mark.parametrize("data, field", [
    ({"num_agentz": 3}, "num_agentz"),
    ({"num_agents": "ten"}, "num_agents"),
    ({"learning_rate": "fast"}, "learning_rate"),
    ({"model_kind": "cnn"}, "model_kind"),
    ({"rounds": 0}, "rounds"),
    ({"intra_radius": 0.6}, "intra_radius"),
    ({"learning_rate": -0.1}, "learning_rate"),
    ({"model_kind": "ridge_logistic", "ridge_lambda": 0.0}, "ridge_lambda"),
    ({"scenario_kind": "multi_cluster", "cluster_split": [5, 4]}, "cluster_split"),
])
def test_invalid_fields_name_the_field(data, field):
    with pytest.raises(ConfigError) as info:
        ScenarioConfig.from_dict(data)
    assert info.value.field == field
    assert info.value.exit_code == 2


def test_outlier_needs_three_agents():
    with pytest.raises(ConfigError, match="E > 2"):
        ScenarioConfig.from_dict({"num_agents": 2})


def test_integral_floats_accepted_for_ints():
    assert ScenarioConfig.from_dict({"rounds": 20.0}).rounds == 20
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"rounds": True})


def test_resolved_split():
    assert ScenarioConfig().resolved_split() == (9, 1)
    multi = ScenarioConfig(scenario_kind=ScenarioKind.MULTI_CLUSTER, num_clusters=3)
    assert multi.resolved_split() == (4, 3, 3)
    assert multi.with_overrides(cluster_split=[7, 2, 1]).resolved_split() == (7, 2, 1)


def test_read_config_file(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert read_config_file(str(empty)) == {}
    assert read_config_file(None) == {}

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="malformed JSON"):
        read_config_file(str(bad))
    with pytest.raises(ConfigError, match="not found"):
        read_config_file(str(tmp_path / "missing.json"))


def test_manifest_from_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"algorithms": "all", "repetitions": 3, "rounds": 5,
                                "init_strategy": "oracle_perturbed", "output_dir": str(tmp_path / "out")}))
    manifest = load_manifest(str(path))
    assert manifest.algorithms == tuple(Algorithm)
    assert manifest.repetitions == 3
    assert manifest.scenario.rounds == 5
    assert manifest.init_strategy == InitStrategy.ORACLE_PERTURBED
    assert manifest.to_dict()["algorithms"] == ["fedavg", "focus", "fedavg_hardcluster"]


def test_manifest_overrides_keep_unset_values(tmp_path):
    manifest = ExperimentManifest(output_dir=str(tmp_path))
    changed = manifest.with_overrides(scenario_overrides={"seed": 9, "rounds": None}, repetitions=None)
    assert changed.scenario.seed == 9
    assert changed.scenario.rounds == manifest.scenario.rounds
    assert changed.repetitions == 1
    with pytest.raises(ConfigError):
        manifest.with_overrides(repetitions=0)


def test_parse_algorithms():
    assert parse_algorithms("focus") == (Algorithm.FOCUS,)
    assert parse_algorithms(["fedavg", "focus"]) == (Algorithm.FEDAVG, Algorithm.FOCUS)
    with pytest.raises(ConfigError, match="unknown algorithm"):
        parse_algorithms("qffl")
