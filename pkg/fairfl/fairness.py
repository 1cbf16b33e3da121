"""
Fairness metrics for trained federated models
FAA (spread of per-agent excess risks), agnostic loss, accuracy parity,
plus the closed-form fairness bounds for the outlier scenario.

Excess risks need each agent's Bayes loss. For the Gaussian linear model
that is known exactly (sigma^2); otherwise a centralized model trained on the
agent's true cluster stands in for it. Both paths read generating metadata
(true_mean, true_cluster), so they are for evaluation only.
"""
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from fairfl.data_synth import AgentDataset
from fairfl.fl_engine import ClusterModels, evaluate_losses
from fairfl.models import (
    analytic_excess_risk_linear, gradient, mixture_predict, predict, prediction_accuracy, prediction_loss,
    smoothness_estimate,
)
from utils.console import get_logger

log = get_logger("Fairness")


class RiskMethod(str, Enum):
    ANALYTIC_LINEAR = "analytic_linear"
    SURROGATE = "surrogate"


@dataclass(frozen=True)
class ExcessRiskVector:
    """
    Per-agent excess risks, raw. Sampling noise can push surrogate values
    slightly below zero; clamped() is what the FAA headline uses.
    """
    per_agent: np.ndarray
    method: RiskMethod
    converged: bool = True

    def __post_init__(self):
        if self.per_agent.ndim != 1 or self.per_agent.shape[0] < 1:
            raise ValueError("excess risks must be a non-empty vector")
        if not np.all(np.isfinite(self.per_agent)):
            raise ValueError("excess risks must be finite")

    def clamped(self):
        return np.maximum(self.per_agent, 0.0)


@dataclass(frozen=True)
class FairnessReport:
    faa: float
    faa_raw: float
    agnostic_loss: float
    average_loss: float
    accuracy_parity_std: float
    argmax_pair: tuple
    per_agent_loss: np.ndarray
    per_agent_excess: ExcessRiskVector
    per_agent_accuracy: np.ndarray = None

    def to_dict(self):
        return {
            "faa": self.faa,
            "faa_raw": self.faa_raw,
            "agnostic_loss": self.agnostic_loss,
            "avg_loss": self.average_loss,
            "accuracy_parity_std": None if math.isnan(self.accuracy_parity_std) else self.accuracy_parity_std,
            "argmax_pair": list(self.argmax_pair),
            "per_agent_loss": self.per_agent_loss.tolist(),
            "per_agent_excess": self.per_agent_excess.per_agent.tolist(),
            "per_agent_accuracy": None if self.per_agent_accuracy is None else self.per_agent_accuracy.tolist(),
            "excess_method": self.per_agent_excess.method.value,
            "surrogate_converged": self.per_agent_excess.converged,
            "oracle_evaluation_only": True,
        }


def _as_weights(models):
    if isinstance(models, ClusterModels):
        return models.weights
    weights = np.asarray(models, dtype=np.float64)
    return weights.reshape(1, -1) if weights.ndim == 1 else weights


def _as_pi(pi, E, M):
    if pi is None:
        if M != 1:
            raise ValueError("pi is required when there is more than one model")
        return np.ones((E, 1))
    pi = getattr(pi, "pi", pi)
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (E, M):
        raise ValueError(f"pi shape {pi.shape} does not match {E} agents x {M} models")
    return pi


# --- Bayes loss stand-in ---

def pool_datasets(datasets):
    """One dataset holding every sample of the given agents, in agent order"""
    if not datasets:
        raise ValueError("cannot pool an empty list of datasets")
    first = datasets[0]
    return AgentDataset(
        np.vstack([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        first.true_mean,
        first.noise_std,
        first.feature_std,
        first.true_cluster,
    )


def fit_centralized(model, data, budget=5000, tol=1e-8):
    """
    Full-batch gradient descent from zero with step 1/L until the gradient
    norm is <= tol or the budget runs out.

    Returns:
        (weights, converged)
    """
    step = 1.0 / smoothness_estimate(model, data)
    w = np.zeros(data.dimension)
    for _ in range(budget):
        g = gradient(model, w, data)
        if np.linalg.norm(g) <= tol:
            return w, True
        w = w - step * g
    return w, bool(np.linalg.norm(gradient(model, w, data)) <= tol)


def surrogate_bayes_loss(model, train_datasets, eval_datasets=None, budget=5000, tol=1e-8):
    """
    Per-agent surrogate of the Bayes loss.

    Agents are grouped by their true cluster, one centralized model is fit on
    each group's pooled training data, and each agent's surrogate is that
    model's loss on the agent's evaluation data.

    Returns:
        (E-vector of losses, converged flag over all clusters)
    """
    eval_datasets = eval_datasets or train_datasets
    if len(eval_datasets) != len(train_datasets):
        raise ValueError("need one evaluation set per agent")
    clusters = sorted({d.true_cluster for d in train_datasets})
    fits = {}
    converged = True
    for c in clusters:
        members = [d for d in train_datasets if d.true_cluster == c]
        w, ok = fit_centralized(model, pool_datasets(members), budget, tol)
        if not ok:
            log.warning(f"surrogate fit for cluster {c} stopped at the budget of {budget} iterations")
        converged = converged and ok
        fits[c] = w
    losses = np.array([
        prediction_loss(model, predict(model, fits[train.true_cluster], test.features), test.labels)
        for train, test in zip(train_datasets, eval_datasets)
    ])
    return losses, converged


# --- excess risks and FAA ---

def excess_risks(model, models, datasets, pi=None, method=None, eval_datasets=None, budget=5000, tol=1e-8):
    """
    Excess risk of every agent's effective model.

    The effective model is the pi-weighted ensemble of the cluster models (a
    single global model when pi is omitted). For the linear model the
    ensemble is itself linear, so the analytic path evaluates
    delta^2 ||sum_m pi_m w_m - mu_e||^2 exactly.

    Args:
        model: ModelKind
        models: ClusterModels, M x d array, or one d-vector
        datasets: Training AgentDatasets (surrogate fits and generating metadata)
        pi: Optional E x M soft labels
        method: RiskMethod; analytic_linear by default for linear models,
            surrogate otherwise
        eval_datasets: Fresh evaluation sets for the surrogate path
    """
    weights = _as_weights(models)
    E = len(datasets)
    pi = _as_pi(pi, E, weights.shape[0])
    if method is None:
        method = RiskMethod.ANALYTIC_LINEAR if model.is_linear else RiskMethod.SURROGATE
    method = RiskMethod(method)

    if method == RiskMethod.ANALYTIC_LINEAR:
        if not model.is_linear:
            raise ValueError("analytic_linear excess risks need the linear_regression model")
        values = []
        for e, data in enumerate(datasets):
            effective = mixture_predict(model, weights, pi[e], np.eye(weights.shape[1]))
            values.append(analytic_excess_risk_linear(effective, data.true_mean, data.feature_std))
        return ExcessRiskVector(np.array(values), method)

    eval_datasets = eval_datasets or datasets
    bayes, converged = surrogate_bayes_loss(model, datasets, eval_datasets, budget, tol)
    losses = evaluate_losses(model, weights, pi, eval_datasets)
    return ExcessRiskVector(losses - bayes, method, converged)


def faa(excess):
    """
    max_e excess_e - min_e excess_e.

    Returns:
        (value, (argmax agent, argmin agent))
    """
    values = excess.per_agent if isinstance(excess, ExcessRiskVector) else np.asarray(excess, dtype=np.float64)
    if values.shape[0] < 1:
        raise ValueError("faa needs at least one agent")
    hi = int(np.argmax(values))
    lo = int(np.argmin(values))
    return float(values[hi] - values[lo]), (hi, lo)


def agnostic_loss(per_agent_loss):
    """Worst per-agent population loss"""
    return float(np.max(per_agent_loss))


def average_loss(per_agent_loss):
    return float(np.mean(per_agent_loss))


def accuracy_parity_std(per_agent_accuracy, model=None):
    """
    Population standard deviation of per-agent accuracies.

    Args:
        per_agent_accuracy: One accuracy per agent
        model: ModelKind of the run; a regression model is rejected
    """
    if per_agent_accuracy is None or (model is not None and model.is_linear):
        raise ValueError("accuracy parity is only defined for classification runs")
    return float(np.std(np.asarray(per_agent_accuracy, dtype=np.float64)))


# --- closed-form bounds ---

def theorem3_bounds(E, r, R, delta):
    """
    Outlier scenario, linear model.

    Returns:
        (focus_upper, fedavg_lower) = (delta^2 r^2, delta^2 ((R^2 (E-2) - 2 R r) / E + r^2))
    """
    if E <= 2:
        raise ValueError("E > 2 required for the outlier bounds")
    if not R > 2 * r:
        raise ValueError("R > 2r required for the outlier bounds")
    d2 = delta ** 2
    return d2 * r ** 2, d2 * ((R ** 2 * (E - 2) - 2 * R * r) / E + r ** 2)


def theorem4_bounds(E, r, R, G, L, mu):
    """
    Outlier scenario with mu-strongly convex, L-smooth, G-Lipschitz losses.

    Returns:
        (focus_upper, fedavg_lower); the square-root term counts as 0 when
        its argument is negative
    """
    if E <= 2:
        raise ValueError("E > 2 required for the outlier bounds")
    if not mu > 0 or not L >= mu:
        raise ValueError("requires 0 < mu <= L")
    B = 2.0 * G * r / (E - 1)
    kappa = L / mu
    inside = B * (R - kappa * B)
    root = math.sqrt(inside) if inside > 0 else 0.0
    lower = (((E - 1) / E - kappa / E ** 2) * R
             - (1 + kappa * (E - 1) / E - kappa ** 2 / E) * B
             - (2 * kappa / E) * root)
    return B, lower


# --- reports ---

def evaluate_agents(model, models, pi, eval_datasets):
    """
    Per-agent ensemble test loss and, for classification, accuracy.

    Returns:
        (losses, accuracies or None)
    """
    weights = _as_weights(models)
    pi = _as_pi(pi, len(eval_datasets), weights.shape[0])
    losses = evaluate_losses(model, weights, pi, eval_datasets)
    if model.is_linear:
        return losses, None
    accuracies = np.array([
        prediction_accuracy(mixture_predict(model, weights, pi[e], data.features), data.labels)
        for e, data in enumerate(eval_datasets)
    ])
    return losses, accuracies


def build_report(model, models, train_datasets, eval_datasets, pi=None, method=None, budget=5000, tol=1e-8):
    """Assemble the FairnessReport of one trained run"""
    losses, accuracies = evaluate_agents(model, models, pi, eval_datasets)
    excess = excess_risks(model, models, train_datasets, pi, method, eval_datasets, budget, tol)
    raw, _ = faa(excess)
    negative = int(np.sum(excess.per_agent < 0))
    if negative:
        log.debug(f"{negative} negative excess risk(s) clamped to 0 for the FAA headline (raw FAA {raw:.6g})")
    headline, pair = faa(excess.clamped())
    parity = accuracy_parity_std(accuracies, model) if accuracies is not None else float("nan")
    return FairnessReport(
        faa=headline,
        faa_raw=raw,
        agnostic_loss=agnostic_loss(losses),
        average_loss=average_loss(losses),
        accuracy_parity_std=parity,
        argmax_pair=pair,
        per_agent_loss=losses,
        per_agent_excess=excess,
        per_agent_accuracy=accuracies,
    )
