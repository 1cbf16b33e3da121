"""
Experiment driver
Builds scenarios, runs the selected algorithms for every repetition
(seed + k), collects FairnessReports and writes the run artifacts.
Also parameter sweeps over M, K, eta, E, r and R.
"""
import os
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from fairfl import exporters
from fairfl.config import Algorithm, ScenarioKind
from fairfl.data_synth import build_scenario
from fairfl.errors import ConfigError
from fairfl.fairness import build_report
from fairfl.fl_engine import ClusterModels, run_fedavg, run_fedavg_hardcluster
from fairfl.focus_em import hard_assignment, run_focus
from fairfl.models import ModelKind
from utils.console import format_elapsed, get_logger

log = get_logger("Experiment")

# sweep name -> ScenarioConfig field
SWEEP_PARAMS = {
    "M": "num_clusters",
    "K": "local_steps",
    "eta": "learning_rate",
    "η": "learning_rate",
    "E": "num_agents",
    "r": "intra_radius",
    "R": "inter_distance",
}
INT_PARAMS = {"num_clusters", "local_steps", "num_agents"}


@dataclass
class RunResult:
    algorithm: Algorithm
    seed: int
    repetition: int
    models: ClusterModels
    report: object
    logs: list
    pi: np.ndarray = None
    history: object = None
    round_snapshots: list = field(default_factory=list)
    elapsed: float = 0.0

    def summary_row(self):
        parity = self.report.accuracy_parity_std
        return {
            "algo": self.algorithm.value,
            "seed": self.seed,
            "avg_loss": self.report.average_loss,
            "faa": self.report.faa,
            "agnostic": self.report.agnostic_loss,
            "acc_parity": None if np.isnan(parity) else parity,
        }

    @property
    def tag(self):
        return f"{self.algorithm.value}_seed{self.seed}"


# --- single runs ---

def _compact(assignment):
    """Relabel cluster indices to 0..k-1 in order of first use so no cluster is empty"""
    labels = {}
    for a in assignment:
        labels.setdefault(int(a), len(labels))
    return [labels[int(a)] for a in assignment], len(labels)


def _one_hot(assignment, num_clusters):
    pi = np.zeros((len(assignment), num_clusters))
    pi[np.arange(len(assignment)), assignment] = 1.0
    return pi


def run_algorithm(algorithm, scenario, cfg, seed, repetition=0, focus_result=None):
    """
    Train one algorithm on a generated scenario and evaluate it.

    Args:
        algorithm: Algorithm
        scenario: FederatedScenario
        cfg: ScenarioConfig
        seed: Run seed
        focus_result: Earlier FOCUS RunResult on the same data; the
            hard-cluster baseline takes its assignment from it

    Returns:
        RunResult
    """
    algorithm = Algorithm(algorithm)
    model = ModelKind.from_config(cfg)
    started = time.perf_counter()
    pi = None
    history = None
    snapshots = []

    if algorithm == Algorithm.FEDAVG:
        w, logs = run_fedavg(scenario.train, cfg, scenario.test, seed=seed,
                             on_round=lambda t, m: snapshots.append((t, m.weights.copy())))
        models = ClusterModels.single(w)
    elif algorithm == Algorithm.FOCUS:
        models, labels, history = run_focus(scenario.train, cfg, test_datasets=scenario.test,
                                            centers=scenario.spec.centers, seed=seed)
        pi = labels.pi
        logs = history.logs
        snapshots = [(t, snap[1].weights) for t, snap in enumerate(history.snapshots[1:])]
    else:
        if focus_result is None:
            focus_result = run_algorithm(Algorithm.FOCUS, scenario, cfg, seed, repetition)
        assignment, k = _compact(hard_assignment(focus_result.pi))
        models, logs = run_fedavg_hardcluster(scenario.train, assignment, cfg, scenario.test, seed=seed,
                                              num_clusters=k)
        pi = _one_hot(assignment, k)

    report = build_report(model, models, scenario.train, scenario.test, pi,
                          budget=cfg.surrogate_budget, tol=cfg.surrogate_tol)
    elapsed = time.perf_counter() - started
    log.info(f"{algorithm.value} seed {seed}: faa={report.faa:.4g} avg_loss={report.average_loss:.4g} "
             f"({format_elapsed(elapsed)})")
    return RunResult(algorithm, seed, repetition, models, report, logs, pi, history, snapshots, elapsed)


def run_repetition(manifest, repetition, spec=None):
    """All algorithms of the manifest on the scenario of seed + repetition"""
    cfg = manifest.scenario
    seed = cfg.seed + repetition
    scenario = build_scenario(cfg, seed, spec)
    results = []
    focus_result = None
    for algorithm in manifest.algorithms:
        result = run_algorithm(algorithm, scenario, cfg, seed, repetition, focus_result)
        if algorithm == Algorithm.FOCUS:
            focus_result = result
        results.append(result)
    return results


def run_manifest(manifest, spec=None):
    results = []
    for k in range(manifest.repetitions):
        results.extend(run_repetition(manifest, k, spec))
    return results


# --- outputs ---

def summary_document(manifest, results):
    """
    The deterministic summary: resolved config, one row per run and the full
    reports. Wall-clock data goes to the separate timing document.
    """
    return {
        "config": manifest.to_dict(),
        "rows": [r.summary_row() for r in results],
        "runs": [{"algo": r.algorithm.value, "seed": r.seed, "repetition": r.repetition,
                  "report": r.report.to_dict()} for r in results],
    }


def timing_document(results, started_utc):
    return {
        "started_utc": started_utc,
        "finished_utc": _utc_now(),
        "runs": [{"algo": r.algorithm.value, "seed": r.seed, "seconds": r.elapsed,
                  "elapsed": format_elapsed(r.elapsed)} for r in results],
    }


def _utc_now():
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")


def write_run_outputs(manifest, results, out_dir, started_utc=None):
    """
    Per run: round-log CSV, report JSON, final checkpoint, per-C-round
    checkpoints and (FOCUS) the pi history CSV. Then summary CSV/JSON and
    timing JSON.

    Returns:
        Path of summary.json
    """
    cfg = manifest.scenario
    config_dict = manifest.to_dict()
    for r in results:
        exporters.write_round_log(os.path.join(out_dir, f"rounds_{r.tag}.csv"), r.logs)
        exporters.write_json(os.path.join(out_dir, f"report_{r.tag}.json"), r.report.to_dict())
        exporters.write_checkpoint(os.path.join(out_dir, f"checkpoint_{r.tag}.json"),
                                   r.models, r.pi, config_dict, r.seed)
        if r.round_snapshots:
            exporters.write_round_checkpoints(os.path.join(out_dir, f"checkpoints_{r.tag}.json"),
                                              r.round_snapshots, cfg.checkpoint_every)
        if r.history is not None:
            exporters.write_pi_history(os.path.join(out_dir, f"pi_{r.tag}.csv"), r.history.snapshots)

    exporters.write_summary_csv(os.path.join(out_dir, "summary.csv"), [r.summary_row() for r in results])
    exporters.write_json(os.path.join(out_dir, "timing.json"), timing_document(results, started_utc or _utc_now()))
    return exporters.write_json(os.path.join(out_dir, "summary.json"), summary_document(manifest, results))


def run_and_write(manifest, out_dir=None, spec=None):
    started_utc = _utc_now()
    results = run_manifest(manifest, spec)
    path = write_run_outputs(manifest, results, out_dir or manifest.output_dir, started_utc)
    return results, path


# --- sweeps ---

def parse_sweep_values(param, text):
    """
    '1,2,3' -> typed values for a sweep parameter.

    Raises:
        ConfigError: unknown parameter, empty list or unparsable value
    """
    if param not in SWEEP_PARAMS:
        allowed = ", ".join(k for k in SWEEP_PARAMS if k != "η")
        raise ConfigError("param", f"unknown sweep parameter {param!r} (expected one of {allowed})")
    items = text if isinstance(text, (list, tuple)) else [s for s in str(text).split(",") if s.strip()]
    if not items:
        raise ConfigError("values", "sweep needs at least one value")
    cast = int if SWEEP_PARAMS[param] in INT_PARAMS else float
    try:
        return [cast(str(v).strip()) for v in items]
    except ValueError:
        raise ConfigError("values", f"cannot parse {text!r} as {cast.__name__} values for {param}")


def sweep_config(cfg, param, value, frozen_split=None):
    """Config for one sweep point; M sweeps keep the true clusters fixed"""
    name = SWEEP_PARAMS[param]
    overrides = {name: value}
    if frozen_split is not None and cfg.scenario_kind == ScenarioKind.MULTI_CLUSTER:
        overrides["cluster_split"] = list(frozen_split)
    return cfg.with_overrides(**overrides)


def sweep(manifest, param, values, spec=None):
    """
    Run the manifest once per sweep value.

    Returns:
        (rows, results): summary rows with param/value/repetition added, and
        the RunResults in the same order
    """
    values = parse_sweep_values(param, values)
    base = manifest.scenario
    frozen = base.resolved_split() if SWEEP_PARAMS[param] == "num_clusters" else None
    rows = []
    results = []
    for value in values:
        point = replace(manifest, scenario=sweep_config(base, param, value, frozen))
        for k in range(point.repetitions):
            for result in run_repetition(point, k, spec):
                row = result.summary_row()
                row.update({"param": param, "value": value, "repetition": k})
                rows.append(row)
                results.append(result)
    return rows, results


def sweep_and_write(manifest, param, values, out_dir=None, spec=None):
    rows, results = sweep(manifest, param, values, spec)
    out_dir = out_dir or manifest.output_dir
    path = exporters.write_sweep_csv(os.path.join(out_dir, f"sweep_{SWEEP_PARAMS[param]}.csv"), rows)
    return rows, path
