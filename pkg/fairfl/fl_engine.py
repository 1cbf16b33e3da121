"""
Round-based federated protocol simulator
Broadcast, local SGD on every agent, weighted aggregation on the server.
Implements FedAvg and per-cluster FedAvg (hard clustering).

All E agents take part in every round. Local updates may run in parallel
(see fairfl.parallel) but every reduction runs in agent order, so a run is
bit-identical whatever the thread count.
"""
import time
from dataclasses import dataclass, field, replace

import numpy as np

from fairfl.config import InitStrategy
from fairfl.errors import ConfigError, DivergenceError, EmptyClusterError
from fairfl.models import ModelKind, empirical_loss, gradient, mixture_predict, prediction_loss, smoothness_estimate
from fairfl.parallel import ordered_map
from fairfl.rng import Stream
from utils.console import get_logger

log = get_logger("FedAvg")

DESCENT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ClusterModels:
    """The M parameter vectors W = {w_1..w_M}, stored as an M x d array"""
    weights: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ValueError("ClusterModels weights must be an M x d array")
        if not np.all(np.isfinite(self.weights)):
            raise DivergenceError()

    @property
    def num_models(self):
        return self.weights.shape[0]

    @property
    def dimension(self):
        return self.weights.shape[1]

    def norms(self):
        return np.linalg.norm(self.weights, axis=1)

    def to_lists(self):
        return self.weights.tolist()

    @classmethod
    def single(cls, w):
        return cls(np.asarray(w, dtype=np.float64).reshape(1, -1).copy())


@dataclass(frozen=True)
class RoundLog:
    """
    Per-round record. Losses are the ensemble-then-loss values of each agent's
    effective model after this round's update; objective is the
    sample-weighted global training loss sum_e (n_e/n) L_e.
    """
    round: int
    per_agent_train_loss: np.ndarray
    per_agent_test_loss: np.ndarray
    model_snapshot_norms: np.ndarray
    wall_time: float
    objective: float = float("nan")

    def same_numbers(self, other):
        """Bitwise equality of everything except wall_time"""
        return (self.round == other.round
                and np.array_equal(self.per_agent_train_loss, other.per_agent_train_loss)
                and np.array_equal(self.per_agent_test_loss, other.per_agent_test_loss)
                and np.array_equal(self.model_snapshot_norms, other.model_snapshot_norms)
                and (self.objective == other.objective or (np.isnan(self.objective) and np.isnan(other.objective))))


@dataclass
class FederationState:
    round: int
    models: ClusterModels
    agent_datasets: list
    config: object
    test_datasets: list = None
    seed: int = None
    agent_ids: tuple = field(default=None)

    def __post_init__(self):
        d = self.models.dimension
        for data in self.agent_datasets:
            if data.dimension != d:
                raise ValueError("model dimension differs from agent data dimension")
        if self.seed is None:
            self.seed = self.config.seed
        if self.agent_ids is None:
            self.agent_ids = tuple(range(len(self.agent_datasets)))


# --- local training and aggregation ---

def local_sgd(w0, data, eta, K, model, rng=None, batch_size=0):
    """
    K gradient steps on one agent's data starting from w0.

    Args:
        w0: Initial parameters (the broadcast model)
        data: AgentDataset
        eta: Learning rate (0 leaves w0 unchanged)
        K: Number of local steps (>= 1)
        model: ModelKind
        rng: Stream for minibatch sampling, only used when batch_size > 0
        batch_size: 0 means full-batch steps

    Returns:
        Parameters after K steps
    """
    if K < 1:
        raise ValueError("local_sgd requires K >= 1")
    if eta < 0:
        raise ValueError("local_sgd requires eta >= 0")
    w = np.array(w0, dtype=np.float64)
    n = data.num_samples
    for step in range(K):
        rows = None
        if batch_size and batch_size < n:
            rows = rng.integers(0, n, size=batch_size)
        w = w - eta * gradient(model, w, data, rows)
        if not np.all(np.isfinite(w)):
            raise DivergenceError(step=step)
    return w


def aggregate(thetas, weights):
    """
    sum_e (weight_e / sum weights) theta_e, reduced in agent order.

    FedAvg passes n_e, FOCUS passes pi_em; the normalization is done the same
    way for both so equal n_e and pi = 1 give identical bits.
    """
    weights = [float(w) for w in weights]
    total = 0.0
    for w in weights:
        total += w
    out = np.zeros_like(np.asarray(thetas[0], dtype=np.float64))
    for theta, w in zip(thetas, weights):
        out = out + (w / total) * theta
    return out


def sample_weights(datasets):
    return [d.num_samples for d in datasets]


def evaluate_losses(model, weights, pi, datasets):
    """Per-agent loss of the pi-weighted ensemble (ensemble, then loss)"""
    out = np.empty(len(datasets))
    for e, data in enumerate(datasets):
        preds = mixture_predict(model, weights, pi[e], data.features)
        out[e] = prediction_loss(model, preds, data.labels)
    return out


def global_training_loss(model, w, datasets):
    """sum_e (n_e / n) L_e(w) with the empirical losses of each agent"""
    losses = [empirical_loss(model, w, data) for data in datasets]
    return float(aggregate(np.array(losses).reshape(-1, 1), sample_weights(datasets))[0])


def descent_step_is_safe(model, eta, datasets):
    """True when eta <= 1 / (2 L) for every agent's smoothness estimate"""
    smoothness = max(smoothness_estimate(model, data) for data in datasets)
    return eta <= 1.0 / (2.0 * smoothness)


def _minibatch_stream(cfg, seed, round, agent, cluster):
    if cfg.batch_size:
        return Stream(seed, "minibatch", round, agent, cluster)
    return None


# --- initialization shared by FedAvg and FOCUS ---

def initial_models(datasets, cfg, num_models, strategy=InitStrategy.LOCAL_FIT, centers=None, seed=None):
    """
    Starting weights W^(0).

    local_fit: the first model is the K-step local fit (from zero) of a randomly
    chosen agent; each further model is the local fit of the agent farthest
    from all fits chosen so far, ties going to the lowest agent index.
    oracle_perturbed: w_m = w*_m + a random vector of norm cfg.init_radius.

    Returns:
        ClusterModels with num_models rows
    """
    seed = cfg.seed if seed is None else seed
    d = datasets[0].dimension
    if strategy == InitStrategy.ORACLE_PERTURBED:
        if centers is None:
            raise ConfigError("init_strategy", "oracle_perturbed needs the true cluster centers")
        centers = np.asarray(centers, dtype=np.float64)
        if centers.shape[0] != num_models:
            raise ConfigError("num_clusters", f"oracle_perturbed needs M = {centers.shape[0]} true clusters")
        weights = [centers[m] + Stream(seed, "oracle_init", m).unit_vector(d) * cfg.init_radius
                   for m in range(num_models)]
        return ClusterModels(np.array(weights))

    if num_models > len(datasets):
        raise ConfigError("num_clusters", "local_fit needs at least as many agents as models")
    model = ModelKind.from_config(cfg)
    fits = ordered_map(
        lambda data: local_sgd(np.zeros(d), data, cfg.learning_rate, cfg.local_steps, model),
        datasets,
    )
    fits = np.array(fits)
    chosen = [int(Stream(seed, "init").integers(0, len(datasets)))]
    while len(chosen) < num_models:
        dists = np.min(np.linalg.norm(fits[:, None, :] - fits[chosen][None, :, :], axis=2), axis=1)
        dists[chosen] = -1.0
        chosen.append(int(np.argmax(dists)))
    log.debug(f"local_fit init picked agents {chosen}")
    return ClusterModels(fits[chosen].copy())


# --- FedAvg ---

def fedavg_round(state):
    """
    One FedAvg round: every agent runs local_sgd from the global model, the
    server takes the n_e/n weighted average.

    Returns:
        (new FederationState, RoundLog)
    """
    if state.models.num_models != 1:
        raise ValueError("fedavg_round needs exactly one global model")
    cfg = state.config
    model = ModelKind.from_config(cfg)
    started = time.perf_counter()
    w_global = state.models.weights[0]
    t = state.round

    def local_update(e):
        data = state.agent_datasets[e]
        rng = _minibatch_stream(cfg, state.seed, t, state.agent_ids[e], 0)
        try:
            return local_sgd(w_global, data, cfg.learning_rate, cfg.local_steps, model, rng, cfg.batch_size)
        except DivergenceError as err:
            raise err.located(round=t, agent=state.agent_ids[e])

    thetas = ordered_map(local_update, range(len(state.agent_datasets)))
    w_new = aggregate(thetas, sample_weights(state.agent_datasets))
    models = ClusterModels.single(w_new)

    ones = np.ones((len(state.agent_datasets), 1))
    train_loss = evaluate_losses(model, models.weights, ones, state.agent_datasets)
    test_sets = state.test_datasets or state.agent_datasets
    test_loss = evaluate_losses(model, models.weights, ones, test_sets)
    entry = RoundLog(
        round=t,
        per_agent_train_loss=train_loss,
        per_agent_test_loss=test_loss,
        model_snapshot_norms=models.norms(),
        wall_time=time.perf_counter() - started,
        objective=global_training_loss(model, w_new, state.agent_datasets),
    )
    return replace(state, round=t + 1, models=models), entry


def check_descent(logs, label="FedAvg", strict=True):
    """
    Indices of rounds whose objective rose above the previous round by more
    than DESCENT_TOLERANCE (relative).

    Args:
        strict: Log violations as warnings. With K > 1 local steps on
            heterogeneous agents the FedAvg fixed point is not the global
            minimizer, so late rounds may creep up by small
            amounts; those runs pass strict=False and log at debug level.
    """
    report = log.warning if strict else log.debug
    bad = []
    for prev, cur in zip(logs, logs[1:]):
        if cur.objective > prev.objective + DESCENT_TOLERANCE * max(1.0, abs(prev.objective)):
            bad.append(cur.round)
            report(f"{label} objective increased at round {cur.round}: {prev.objective:.6e} -> {cur.objective:.6e}")
    return bad


def run_fedavg(datasets, cfg, test_datasets=None, init=None, seed=None, on_round=None, agent_ids=None):
    """
    T rounds of FedAvg.

    Args:
        datasets: Training AgentDatasets
        cfg: ScenarioConfig (rounds, local_steps, learning_rate, ...)
        test_datasets: Evaluation sets for the logged test losses
        init: Optional starting weights; default is the local_fit init with one model
        seed: Overrides cfg.seed
        on_round: Optional callback(round_index, ClusterModels) after each round

    Returns:
        (final weights, list of RoundLog)
    """
    if cfg.rounds < 1:
        raise ValueError("run_fedavg requires T >= 1")
    seed = cfg.seed if seed is None else seed
    if init is None:
        models = initial_models(datasets, cfg, 1, InitStrategy.LOCAL_FIT, seed=seed)
    else:
        models = ClusterModels.single(init)
    state = FederationState(0, models, list(datasets), cfg, test_datasets, seed, agent_ids)

    started = time.perf_counter()
    logs = []
    for _ in range(cfg.rounds):
        state, entry = fedavg_round(state)
        logs.append(entry)
        if on_round is not None:
            on_round(entry.round, state.models)

    model = ModelKind.from_config(cfg)
    if descent_step_is_safe(model, cfg.learning_rate, datasets):
        check_descent(logs, strict=cfg.local_steps == 1)
    else:
        log.debug("learning rate above 1/(2L); descent check skipped")
    log.debug(f"FedAvg finished {cfg.rounds} rounds in {time.perf_counter() - started:.2f}s")
    return state.models.weights[0].copy(), logs


def run_fedavg_hardcluster(datasets, assignment, cfg, test_datasets=None, seed=None, num_clusters=None):
    """
    Independent FedAvg per cluster over its member agents.

    Each agent is evaluated only with its own cluster's model. Clusters do not
    share streams that depend on processing order, so the result does not
    depend on which cluster runs first.

    Returns:
        (ClusterModels, list of RoundLog with E-vectors of losses and M norms)
    """
    seed = cfg.seed if seed is None else seed
    assignment = [int(a) for a in assignment]
    if len(assignment) != len(datasets):
        raise ValueError("assignment length must equal the number of agents")
    num_clusters = (max(assignment) + 1) if num_clusters is None else num_clusters
    if any(not 0 <= a < num_clusters for a in assignment):
        raise ValueError("assignment index outside [0, M)")

    members = [[e for e, a in enumerate(assignment) if a == m] for m in range(num_clusters)]
    for m, agents in enumerate(members):
        if not agents:
            raise EmptyClusterError(m)

    weights = []
    per_cluster_logs = []
    for m, agents in enumerate(members):
        tests = [test_datasets[e] for e in agents] if test_datasets is not None else None
        w, logs = run_fedavg([datasets[e] for e in agents], cfg, tests, seed=seed, agent_ids=tuple(agents))
        weights.append(w)
        per_cluster_logs.append(logs)

    merged = []
    E = len(datasets)
    for t in range(cfg.rounds):
        train = np.empty(E)
        test = np.empty(E)
        norms = np.empty(num_clusters)
        wall = 0.0
        objectives = []
        for m, agents in enumerate(members):
            entry = per_cluster_logs[m][t]
            train[agents] = entry.per_agent_train_loss
            test[agents] = entry.per_agent_test_loss
            norms[m] = entry.model_snapshot_norms[0]
            wall += entry.wall_time
            objectives.append([entry.objective])
        cluster_sizes = [sum(datasets[e].num_samples for e in agents) for agents in members]
        objective = float(aggregate(np.array(objectives), cluster_sizes)[0])
        merged.append(RoundLog(t, train, test, norms, wall, objective))
    return ClusterModels(np.array(weights)), merged
