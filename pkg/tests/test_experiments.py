import os

import numpy as np
import pytest

from fairfl import exporters
from fairfl.config import Algorithm, ExperimentManifest, ScenarioConfig, ScenarioKind
from fairfl.data_synth import ClusterSpec, build_scenario
from fairfl.errors import ConfigError
from fairfl.experiments import (
    parse_sweep_values, run_algorithm, run_and_write, run_manifest, sweep, sweep_and_write, sweep_config,
)
from fairfl.parallel import set_thread_count


def _small_manifest(tmp_path, algorithms=tuple(Algorithm), repetitions=1, **scenario):
    cfg = ScenarioConfig(samples_per_agent=200, rounds=20).with_overrides(**scenario)
    return ExperimentManifest(scenario=cfg, algorithms=algorithms, repetitions=repetitions,
                              output_dir=str(tmp_path))


def _three_cluster_spec():
    """
    Favorable geometry: centers A=0, B=(2, 0, ...), C=(2, 1.2, ...). B and C
    are the closest pair, so two models merge the two small clusters.
    """
    centers = np.zeros((3, 20))
    centers[1, 0] = 2.0
    centers[2, 0] = 2.0
    centers[2, 1] = 1.2
    return ClusterSpec(centers, 0.01, 1.0)


# --- single runs ---

def test_each_algorithm_produces_a_report(small_cfg):
    scenario = build_scenario(small_cfg)
    fedavg = run_algorithm(Algorithm.FEDAVG, scenario, small_cfg, small_cfg.seed)
    focus = run_algorithm(Algorithm.FOCUS, scenario, small_cfg, small_cfg.seed)
    hard = run_algorithm(Algorithm.FEDAVG_HARDCLUSTER, scenario, small_cfg, small_cfg.seed, focus_result=focus)
    assert fedavg.models.num_models == 1 and fedavg.pi is None
    assert focus.pi.shape == (10, 2)
    assert len(focus.history.snapshots) == small_cfg.rounds + 1
    assert hard.models.num_models == 2
    assert np.array_equal(hard.pi.sum(axis=1), np.ones(10))
    assert len(fedavg.round_snapshots) == small_cfg.rounds
    row = focus.summary_row()
    assert row["algo"] == "focus" and row["seed"] == 1
    assert row["acc_parity"] is None


def test_hardcluster_follows_focus_assignment(small_cfg):
    scenario = build_scenario(small_cfg)
    hard = run_algorithm(Algorithm.FEDAVG_HARDCLUSTER, scenario, small_cfg, small_cfg.seed)
    labels = np.argmax(hard.pi, axis=1)
    assert len(set(labels[:9])) == 1
    assert labels[9] != labels[0]
    assert hard.report.faa < 0.05


@pytest.fixture(scope="module")
def default_runs():
    """FedAvg and FOCUS on the default outlier scenario for seeds 1..5"""
    manifest = ExperimentManifest(algorithms=(Algorithm.FEDAVG, Algorithm.FOCUS), repetitions=5)
    return run_manifest(manifest)


def test_focus_is_fair_on_default_scenario(default_runs):
    for result in default_runs:
        if result.algorithm != Algorithm.FOCUS:
            continue
        assert result.report.faa <= 0.01
        assert abs(result.report.average_loss - 0.01) <= 0.02


def test_fedavg_is_unfair_on_default_scenario(default_runs):
    fedavg = [r for r in default_runs if r.algorithm == Algorithm.FEDAVG]
    assert [r.seed for r in fedavg] == [1, 2, 3, 4, 5]
    for result in fedavg:
        assert result.report.faa >= 0.7
        assert result.report.average_loss >= 0.09


def test_focus_agnostic_loss_not_worse(default_runs):
    by_seed = {}
    for r in default_runs:
        by_seed.setdefault(r.seed, {})[r.algorithm] = r.report.agnostic_loss
    for losses in by_seed.values():
        assert losses[Algorithm.FEDAVG] >= losses[Algorithm.FOCUS]


def test_all_algorithms_five_repetitions(tmp_path):
    manifest = _small_manifest(tmp_path, repetitions=5, rounds=5)
    results = run_manifest(manifest)
    assert len(results) == 15
    assert sorted({r.seed for r in results}) == [1, 2, 3, 4, 5]


# --- artifacts ---

def test_run_outputs_on_disk(tmp_path):
    manifest = _small_manifest(tmp_path, rounds=10)
    results, summary_path = run_and_write(manifest)
    names = set(os.listdir(tmp_path))
    for algo in ("fedavg", "focus", "fedavg_hardcluster"):
        assert f"rounds_{algo}_seed1.csv" in names
        assert f"report_{algo}_seed1.json" in names
        assert f"checkpoint_{algo}_seed1.json" in names
    assert "pi_focus_seed1.csv" in names
    assert "checkpoints_fedavg_seed1.json" in names
    assert {"summary.csv", "summary.json", "timing.json"} <= names

    summary = exporters.read_json(summary_path)
    assert summary["config"]["num_agents"] == 10
    assert summary["config"]["algorithms"] == ["fedavg", "focus", "fedavg_hardcluster"]
    assert len(summary["rows"]) == 3
    assert summary["runs"][1]["report"]["oracle_evaluation_only"] is True
    assert "started_utc" not in summary

    header, rows = exporters.read_csv(str(tmp_path / "pi_focus_seed1.csv"))
    assert len(rows) == (10 + 1) * 10 * 2
    checkpoints = exporters.read_json(str(tmp_path / "checkpoints_fedavg_seed1.json"))
    assert [c["round"] for c in checkpoints] == [9]


def test_summary_is_byte_identical(tmp_path):
    manifest = _small_manifest(tmp_path, rounds=8)
    _, path = run_and_write(manifest)
    with open(path, "rb") as f:
        first = f.read()
    set_thread_count(4)
    _, path = run_and_write(manifest)
    with open(path, "rb") as f:
        second = f.read()
    assert first == second


# --- sweeps ---

def test_parse_sweep_values():
    assert parse_sweep_values("M", "1,2,3,4") == [1, 2, 3, 4]
    assert parse_sweep_values("eta", "0.01, 0.05") == [0.01, 0.05]
    assert parse_sweep_values("R", [1, 2]) == [1.0, 2.0]
    with pytest.raises(ConfigError, match="at least one value"):
        parse_sweep_values("M", "")
    with pytest.raises(ConfigError, match="unknown sweep parameter"):
        parse_sweep_values("T", "1,2")
    with pytest.raises(ConfigError):
        parse_sweep_values("K", "one,two")


def test_sweep_config_freezes_clusters():
    cfg = ScenarioConfig(scenario_kind=ScenarioKind.MULTI_CLUSTER, num_clusters=3, cluster_split=(7, 2, 1))
    point = sweep_config(cfg, "M", 1, frozen_split=cfg.resolved_split())
    assert point.num_clusters == 1
    assert point.resolved_split() == (7, 2, 1)
    assert sweep_config(cfg, "eta", 0.01).learning_rate == 0.01


def test_model_count_sweep_favorable_geometry(tmp_path):
    # with B and C closest, M=1 is strictly the worst model count
    manifest = _small_manifest(tmp_path, algorithms=(Algorithm.FOCUS,), rounds=60, samples_per_agent=500,
                               scenario_kind="multi_cluster", num_clusters=3, cluster_split=[7, 2, 1])
    rows, _ = sweep(manifest, "M", "1,2,3,4", spec=_three_cluster_spec())
    faa_by_m = {row["value"]: row["faa"] for row in rows}
    assert sorted(faa_by_m) == [1, 2, 3, 4]
    assert all(faa_by_m[1] > faa_by_m[m] for m in (2, 3, 4))
    assert abs(faa_by_m[3] - faa_by_m[4]) <= 0.02
    assert all(row["param"] == "M" and row["repetition"] == 0 for row in rows)


def test_local_step_sweep_converges(tmp_path):
    manifest = _small_manifest(tmp_path, algorithms=(Algorithm.FEDAVG,), rounds=100, samples_per_agent=300)
    rows, path = sweep_and_write(manifest, "K", "1,5,10")
    losses = [row["avg_loss"] for row in rows]
    assert len(losses) == 3
    assert max(losses) <= 1.1 * min(losses)
    assert os.path.basename(path) == "sweep_local_steps.csv"
    header, written = exporters.read_csv(path)
    assert len(written) == 3
    assert [r[1] for r in written] == ["1", "5", "10"]


def test_model_count_sweep_on_generated_clusters(tmp_path):
    # generated centers are about equidistant; M=2 may merge the large cluster with the single agent,
    # so only M >= true cluster count is compared against M=1
    manifest = _small_manifest(tmp_path, algorithms=(Algorithm.FOCUS,), rounds=100, samples_per_agent=1000,
                               scenario_kind="multi_cluster", num_clusters=3, cluster_split=[7, 2, 1])
    rows, _ = sweep(manifest, "M", "1,2,3,4")
    faa_by_m = {row["value"]: row["faa"] for row in rows}
    assert faa_by_m[1] > faa_by_m[3]
    assert faa_by_m[1] > faa_by_m[4]
    assert abs(faa_by_m[3] - faa_by_m[4]) <= 0.02
