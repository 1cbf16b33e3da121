"""
EM-clustered federated learning
E-step: soft cluster labels pi_em from each agent's loss under every model.
M-step: every agent runs local SGD from every cluster model, the server
averages the results with pi-weights.
Also ensemble inference for known agents and one-shot labels for unseen ones.
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np

from fairfl.config import InitStrategy
from fairfl.errors import DivergenceError
from fairfl.fl_engine import (
    ClusterModels, RoundLog, aggregate, evaluate_losses, initial_models, local_sgd, sample_weights,
)
from fairfl.models import LINEAR, ModelKind, empirical_loss, mixture_predict
from fairfl.parallel import ordered_map
from fairfl.rng import Stream
from utils.console import get_logger

log = get_logger("FOCUS")

ROW_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SoftLabelMatrix:
    """E x M row-stochastic matrix of cluster membership probabilities"""
    pi: np.ndarray

    def __post_init__(self):
        pi = self.pi
        if pi.ndim != 2:
            raise ValueError("pi must be an E x M matrix")
        if np.any(pi < 0) or np.any(pi > 1 + ROW_TOLERANCE):
            raise ValueError("pi entries must lie in [0, 1]")
        if np.any(np.abs(pi.sum(axis=1) - 1.0) > ROW_TOLERANCE):
            raise ValueError("pi rows must sum to 1")

    @property
    def num_agents(self):
        return self.pi.shape[0]

    @property
    def num_models(self):
        return self.pi.shape[1]

    @classmethod
    def uniform(cls, E, M):
        return cls(np.full((E, M), 1.0 / M))


@dataclass
class FocusHistory:
    """
    Snapshots of (Pi, W) from initialization through round T, plus the
    quantities the convergence checks watch. model_to_cluster maps each model
    to the true center nearest its final weights; the monitoring lists are
    empty when the run had no centers.
    """
    snapshots: list = field(default_factory=list)
    min_correct_pi: list = field(default_factory=list)
    center_distances: list = field(default_factory=list)
    logs: list = field(default_factory=list)
    starved: list = field(default_factory=list)
    model_to_cluster: tuple = ()

    def record(self, pi, models):
        # copies so later rounds can never touch a recorded snapshot
        self.snapshots.append((SoftLabelMatrix(pi.pi.copy()), ClusterModels(models.weights.copy())))


# --- E-step ---

def e_step(pi, losses):
    """
    pi'_em = pi_em exp(-loss_em) / sum_m' pi_em' exp(-loss_em').

    Exponents are shifted by the smallest loss among the columns that still
    carry mass, so at least one term per row is exp(0) = 1 and nothing
    overflows or underflows to an all-zero row.

    Args:
        pi: SoftLabelMatrix (or E x M array) of current labels
        losses: E x M matrix of mean training losses

    Returns:
        SoftLabelMatrix with rows re-normalized
    """
    pi = pi.pi if isinstance(pi, SoftLabelMatrix) else np.asarray(pi, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape != pi.shape:
        raise ValueError(f"losses shape {losses.shape} does not match pi shape {pi.shape}")
    if not np.all(np.isfinite(losses)):
        raise ValueError("e_step needs finite losses")
    masked = np.where(pi > 0, losses, np.inf)
    shift = masked.min(axis=1, keepdims=True)
    unnormalized = pi * np.exp(-(losses - shift))
    return SoftLabelMatrix(unnormalized / unnormalized.sum(axis=1, keepdims=True))


def loss_matrix(models, datasets, model=LINEAR):
    """E x M matrix of mean training losses L_e(w_m)"""
    M = models.num_models
    pairs = [(e, m) for e in range(len(datasets)) for m in range(M)]
    values = ordered_map(lambda p: empirical_loss(model, models.weights[p[1]], datasets[p[0]]), pairs)
    return np.array(values).reshape(len(datasets), M)


# --- M-step ---

def starved_clusters(pi, mass_threshold=1e-8):
    pi = pi.pi if isinstance(pi, SoftLabelMatrix) else pi
    return [m for m in range(pi.shape[1]) if pi[:, m].sum() < mass_threshold]


def m_step(pi, models, datasets, eta, K, model=LINEAR, mass_threshold=1e-8, seed=0, round=0, batch_size=0):
    """
    For every cluster m: each agent starts from w_m, runs K local steps, and
    the server sets w_m = sum_e pi_em theta_em / sum_e pi_em.

    A cluster whose total mass is below mass_threshold keeps its previous
    weights and is logged as starved.
    """
    if K < 1:
        raise ValueError("m_step requires K >= 1")
    pi = pi.pi if isinstance(pi, SoftLabelMatrix) else np.asarray(pi, dtype=np.float64)
    E, M = pi.shape
    starved = set(starved_clusters(pi, mass_threshold))
    for m in sorted(starved):
        log.warning(f"starved cluster {m}: total mass {pi[:, m].sum():.3e} below {mass_threshold:.1e}, weights frozen")

    jobs = [(m, e) for m in range(M) if m not in starved for e in range(E)]

    def local_update(job):
        m, e = job
        rng = Stream(seed, "minibatch", round, e, m) if batch_size else None
        try:
            return local_sgd(models.weights[m], datasets[e], eta, K, model, rng, batch_size)
        except DivergenceError as err:
            raise err.located(round=round, agent=e, cluster=m)

    results = iter(ordered_map(local_update, jobs))
    weights = models.weights.copy()
    for m in range(M):
        if m in starved:
            continue
        thetas = [next(results) for _ in range(E)]
        weights[m] = aggregate(thetas, pi[:, m])
    return ClusterModels(weights)


# --- monitoring helpers ---

def match_models_to_centers(models, centers):
    """Index of the nearest true center for every model"""
    centers = np.asarray(centers, dtype=np.float64)
    dists = np.linalg.norm(models.weights[:, None, :] - centers[None, :, :], axis=2)
    return tuple(int(c) for c in np.argmin(dists, axis=1))


def correct_mass(pi, true_clusters, model_to_cluster):
    """Per agent: total pi on the models that belong to the agent's true cluster"""
    pi = pi.pi if isinstance(pi, SoftLabelMatrix) else pi
    owner = np.array(model_to_cluster)
    return np.array([pi[e, owner == c].sum() for e, c in enumerate(true_clusters)])


def theorem1_pi_lower_bound(M, R, delta, delta0, T):
    """1 / (1 + (M-1) exp(-2 R delta^2 Delta_0 T))"""
    return 1.0 / (1.0 + (M - 1) * math.exp(-2.0 * R * delta ** 2 * delta0 * T))


def init_margin(models, centers, r):
    """
    Largest Delta_0 with ||w_m - w*_m|| <= min_{m' != m} ||w_m - w*_m'|| - 2(r + Delta_0)
    for every m; negative when the initialization condition fails.
    """
    centers = np.asarray(centers, dtype=np.float64)
    M = models.num_models
    if M < 2:
        return math.inf
    margins = []
    for m in range(M):
        dists = np.linalg.norm(centers - models.weights[m], axis=1)
        others = np.delete(dists, m)
        margins.append((others.min() - dists[m]) / 2.0 - r)
    return float(min(margins))


# --- full run ---

def run_focus(datasets, cfg, init=None, test_datasets=None, centers=None, seed=None, on_round=None,
              num_models=None):
    """
    The EM loop: pi^(0) = 1/M, then T rounds of E-step (with round-t models)
    followed by M-step.

    Args:
        datasets: Training AgentDatasets
        cfg: ScenarioConfig
        init: InitStrategy, or ready ClusterModels; defaults to cfg.init_strategy
        test_datasets: Evaluation sets for the logged test losses
        centers: True cluster centers; needed by oracle_perturbed init and
            the history's monitoring quantities (never used for training)
        seed: Overrides cfg.seed
        on_round: Optional callback(round_index, ClusterModels, SoftLabelMatrix)
        num_models: Overrides cfg.num_clusters

    Returns:
        (ClusterModels, SoftLabelMatrix, FocusHistory)
    """
    seed = cfg.seed if seed is None else seed
    M = cfg.num_clusters if num_models is None else num_models
    if M < 1:
        raise ValueError("run_focus requires M >= 1")
    model = ModelKind.from_config(cfg)
    E = len(datasets)

    if isinstance(init, ClusterModels):
        models = init
    else:
        strategy = cfg.init_strategy if init is None else InitStrategy(init)
        models = initial_models(datasets, cfg, M, strategy, centers=centers, seed=seed)
    if models.num_models != M:
        raise ValueError(f"init has {models.num_models} models, expected {M}")

    pi = SoftLabelMatrix.uniform(E, M)
    history = FocusHistory()
    history.record(pi, models)
    test_sets = test_datasets or datasets
    started = time.perf_counter()

    for t in range(cfg.rounds):
        round_started = time.perf_counter()
        losses = loss_matrix(models, datasets, model)
        pi = e_step(pi, losses)
        starved = starved_clusters(pi, cfg.mass_threshold)
        if starved:
            history.starved.append((t, starved))
        models = m_step(pi, models, datasets, cfg.learning_rate, cfg.local_steps, model,
                        cfg.mass_threshold, seed, t, cfg.batch_size)
        history.record(pi, models)
        history.logs.append(_round_log(t, model, models, pi, datasets, test_sets, round_started))
        if on_round is not None:
            on_round(t, models, pi)

    if centers is not None:
        _fill_monitoring(history, datasets, centers)
    log.debug(f"FOCUS finished {cfg.rounds} rounds (M={M}) in {time.perf_counter() - started:.2f}s")
    return models, pi, history


def _round_log(t, model, models, pi, datasets, test_sets, started):
    per_agent = []
    for e, data in enumerate(datasets):
        value = None
        for m in range(models.num_models):
            term = pi.pi[e, m] * empirical_loss(model, models.weights[m], data)
            value = term if value is None else value + term
        per_agent.append([value])
    objective = float(aggregate(np.array(per_agent), sample_weights(datasets))[0])
    return RoundLog(
        round=t,
        per_agent_train_loss=evaluate_losses(model, models.weights, pi.pi, datasets),
        per_agent_test_loss=evaluate_losses(model, models.weights, pi.pi, test_sets),
        model_snapshot_norms=models.norms(),
        wall_time=time.perf_counter() - started,
        objective=objective,
    )


def _fill_monitoring(history, datasets, centers):
    final_models = history.snapshots[-1][1]
    owner = match_models_to_centers(final_models, centers)
    history.model_to_cluster = owner
    true_clusters = [data.true_cluster for data in datasets]
    centers = np.asarray(centers, dtype=np.float64)
    for pi, models in history.snapshots:
        history.min_correct_pi.append(float(correct_mass(pi, true_clusters, owner).min()))
        history.center_distances.append(np.linalg.norm(models.weights - centers[list(owner)], axis=1))


# --- inference ---

def ensemble_predict(models, pi_row, x, model=LINEAR):
    """sum_m pi_m h_{w_m}(x) for one agent's label row"""
    pi_row = np.asarray(pi_row, dtype=np.float64)
    if pi_row.shape != (models.num_models,):
        raise ValueError("pi_row length must equal the number of models")
    if abs(pi_row.sum() - 1.0) > ROW_TOLERANCE:
        raise ValueError("pi_row must sum to 1")
    return mixture_predict(model, models.weights, pi_row, x)


def one_shot_label(models, data, model=LINEAR):
    """One E-step from the uniform prior for an agent that never trained"""
    if data.num_samples < 1:
        raise ValueError("one_shot_label needs a non-empty dataset")
    losses = np.array([[empirical_loss(model, w, data) for w in models.weights]])
    return e_step(SoftLabelMatrix.uniform(1, models.num_models), losses).pi[0]


def one_shot_predict(models, data, x, model=LINEAR):
    """Predictions for an unseen agent: its one-shot label, then the ensemble"""
    return ensemble_predict(models, one_shot_label(models, data, model), x, model)


def hard_assignment(pi):
    """Per-row argmax; ties go to the lowest cluster index"""
    pi = pi.pi if isinstance(pi, SoftLabelMatrix) else np.asarray(pi)
    return np.argmax(pi, axis=1)
