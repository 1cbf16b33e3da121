"""
Scenario and experiment configuration
A config file is one flat JSON object; defaults < config file < CLI flags
"""
import json
import math
import os
from dataclasses import dataclass, field, fields, replace
from enum import Enum

from fairfl.errors import ConfigError


class ModelType(str, Enum):
    LINEAR_REGRESSION = "linear_regression"
    RIDGE_LOGISTIC = "ridge_logistic"


class ScenarioKind(str, Enum):
    SINGLE_OUTLIER = "single_outlier"
    MULTI_CLUSTER = "multi_cluster"


class InitStrategy(str, Enum):
    LOCAL_FIT = "local_fit"
    ORACLE_PERTURBED = "oracle_perturbed"


class Algorithm(str, Enum):
    FEDAVG = "fedavg"
    FOCUS = "focus"
    FEDAVG_HARDCLUSTER = "fedavg_hardcluster"


ENUM_FIELDS = {
    "model_kind": ModelType,
    "scenario_kind": ScenarioKind,
    "init_strategy": InitStrategy,
}

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one synthetic experiment"""
    num_agents: int = 10
    num_clusters: int = 2
    dimension: int = 20
    intra_radius: float = 0.01
    inter_distance: float = 1.0
    feature_std: float = 1.0
    noise_std: float = 0.1
    samples_per_agent: int = 1000
    rounds: int = 100
    local_steps: int = 10
    learning_rate: float = 0.05
    seed: int = 1
    model_kind: ModelType = ModelType.LINEAR_REGRESSION
    scenario_kind: ScenarioKind = ScenarioKind.SINGLE_OUTLIER
    ridge_lambda: float = 0.1
    cluster_split: tuple = ()
    test_samples: int = 0
    init_strategy: InitStrategy = InitStrategy.LOCAL_FIT
    init_radius: float = 0.3
    mass_threshold: float = 1e-8
    checkpoint_every: int = 10
    batch_size: int = 0
    surrogate_budget: int = 5000
    surrogate_tol: float = 1e-8
    theorem_slack: float = 0.005

    # --- derived values ---

    @property
    def eval_samples(self):
        """Size of the fresh evaluation set drawn per agent"""
        return self.test_samples or self.samples_per_agent

    def resolved_split(self):
        """
        Agent count per true cluster.

        single_outlier is always E-1 normal agents plus one outlier. multi_cluster
        uses cluster_split when given, otherwise spreads E agents evenly over M.
        """
        if self.scenario_kind == ScenarioKind.SINGLE_OUTLIER:
            return (self.num_agents - 1, 1)
        if self.cluster_split:
            return tuple(self.cluster_split)
        base, extra = divmod(self.num_agents, self.num_clusters)
        return tuple(base + (1 if m < extra else 0) for m in range(self.num_clusters))

    def true_cluster_count(self):
        return len(self.resolved_split())

    def with_overrides(self, **overrides):
        """Copy with some fields replaced, validated like a loaded config"""
        merged = self.to_dict()
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return ScenarioConfig.from_dict(merged)

    # --- validation ---

    def validate(self):
        """Raise ConfigError naming the first invalid field"""
        positive_ints = ["num_clusters", "dimension", "samples_per_agent", "rounds", "local_steps"]
        for name in positive_ints:
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.num_agents < 2:
            raise ConfigError("num_agents", "must be >= 2")
        for name in ["test_samples", "checkpoint_every", "batch_size"]:
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")
        if self.surrogate_budget < 1:
            raise ConfigError("surrogate_budget", "must be >= 1")
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and not math.isfinite(value):
                raise ConfigError(f.name, "must be finite")
        if self.inter_distance <= 0:
            raise ConfigError("inter_distance", "must be > 0")
        if self.intra_radius < 0:
            raise ConfigError("intra_radius", "must be >= 0")
        if not self.intra_radius < self.inter_distance / 2:
            raise ConfigError("intra_radius", "must satisfy r < R/2")
        if self.feature_std <= 0:
            raise ConfigError("feature_std", "must be > 0")
        if self.noise_std < 0:
            raise ConfigError("noise_std", "must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate", "must be > 0")
        if self.model_kind == ModelType.RIDGE_LOGISTIC and self.ridge_lambda <= 0:
            raise ConfigError("ridge_lambda", "must be > 0 for ridge_logistic")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge_lambda", "must be >= 0")
        if self.init_radius < 0:
            raise ConfigError("init_radius", "must be >= 0")
        if self.mass_threshold <= 0:
            raise ConfigError("mass_threshold", "must be > 0")
        if self.surrogate_tol <= 0:
            raise ConfigError("surrogate_tol", "must be > 0")
        if self.theorem_slack < 0:
            raise ConfigError("theorem_slack", "must be >= 0")
        if not INT64_MIN <= self.seed <= INT64_MAX:
            raise ConfigError("seed", "must fit in 64 bits")
        if self.scenario_kind == ScenarioKind.SINGLE_OUTLIER and self.num_agents < 3:
            raise ConfigError("num_agents", "E > 2 required for single_outlier")
        if self.scenario_kind == ScenarioKind.MULTI_CLUSTER:
            if self.cluster_split:
                if any(size < 1 for size in self.cluster_split):
                    raise ConfigError("cluster_split", "every cluster needs at least one agent")
                if sum(self.cluster_split) != self.num_agents:
                    raise ConfigError("cluster_split", f"sizes must sum to num_agents={self.num_agents}")
            elif self.num_clusters > self.num_agents:
                raise ConfigError("num_clusters", "cannot spread fewer agents than clusters")
        return self

    # --- JSON ---

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data):
        """Build and validate a config; unknown keys and bad types are ConfigErrors"""
        if not isinstance(data, dict):
            raise ConfigError("", "config must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        defaults = cls()
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(key, "unknown field")
            kwargs[key] = _coerce(key, value, getattr(defaults, key))
        return cls(**kwargs).validate()


def _coerce(key, value, default):
    if key in ENUM_FIELDS:
        enum_cls = ENUM_FIELDS[key]
        try:
            return enum_cls(value)
        except ValueError:
            allowed = ", ".join(e.value for e in enum_cls)
            raise ConfigError(key, f"expected one of {{{allowed}}}, got {value!r}")
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or not all(_is_int(v) for v in value):
            raise ConfigError(key, "expected a list of integers")
        return tuple(int(v) for v in value)
    if isinstance(default, int):
        if not _is_int(value):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    return value


def _is_int(value):
    if isinstance(value, bool):
        return False
    if isinstance(value, int):
        return True
    return isinstance(value, float) and value.is_integer()


# --- experiment manifest ---

MANIFEST_KEYS = ("algorithms", "repetitions", "output_dir")


@dataclass(frozen=True)
class ExperimentManifest:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    algorithms: tuple = (Algorithm.FEDAVG, Algorithm.FOCUS, Algorithm.FEDAVG_HARDCLUSTER)
    repetitions: int = 1
    output_dir: str = "runs"

    @property
    def init_strategy(self):
        return self.scenario.init_strategy

    def validate(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions", "must be >= 1")
        if not self.algorithms:
            raise ConfigError("algorithms", "at least one algorithm is required")
        parent = os.path.abspath(self.output_dir)
        while not os.path.exists(parent):
            parent = os.path.dirname(parent)
        if not os.access(parent, os.W_OK):
            raise ConfigError("output_dir", f"{self.output_dir} is not writable")
        return self

    def to_dict(self):
        out = self.scenario.to_dict()
        out["algorithms"] = [a.value for a in self.algorithms]
        out["repetitions"] = self.repetitions
        out["output_dir"] = self.output_dir
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("", "config must be a JSON object")
        scenario_part = {k: v for k, v in data.items() if k not in MANIFEST_KEYS}
        scenario = ScenarioConfig.from_dict(scenario_part)
        kwargs = {"scenario": scenario}
        if "algorithms" in data:
            kwargs["algorithms"] = parse_algorithms(data["algorithms"])
        if "repetitions" in data:
            if not _is_int(data["repetitions"]):
                raise ConfigError("repetitions", "expected an integer")
            kwargs["repetitions"] = int(data["repetitions"])
        if "output_dir" in data:
            if not isinstance(data["output_dir"], str):
                raise ConfigError("output_dir", "expected a path string")
            kwargs["output_dir"] = data["output_dir"]
        return cls(**kwargs).validate()

    def with_overrides(self, scenario_overrides=None, **overrides):
        scenario = self.scenario.with_overrides(**(scenario_overrides or {}))
        kept = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, scenario=scenario, **kept).validate()


def parse_algorithms(value):
    """'all', one name, or a list of names -> tuple of Algorithm"""
    if isinstance(value, str):
        value = [a.value for a in Algorithm] if value == "all" else [value]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError("algorithms", "expected a non-empty list of algorithm names")
    out = []
    for name in value:
        try:
            out.append(Algorithm(name))
        except ValueError:
            allowed = ", ".join(a.value for a in Algorithm)
            raise ConfigError("algorithms", f"unknown algorithm {name!r} (expected {allowed} or all)")
    return tuple(out)


def read_config_file(path):
    """
    Read a flat JSON config file.

    An empty file means 'all defaults'; a missing file or malformed JSON is a
    ConfigError so the CLI can exit with code 2.
    """
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError("config", f"config file not found: {path}")
    if os.path.getsize(path) == 0:
        return {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"malformed JSON in {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError("config", "config must be a JSON object")
    return data


def load_manifest(path):
    return ExperimentManifest.from_dict(read_config_file(path))


def load_scenario_config(path):
    data = read_config_file(path)
    return ScenarioConfig.from_dict({k: v for k, v in data.items() if k not in MANIFEST_KEYS})
