"""
Loss models: linear regression (MSE) and ridge-regularized binary logistic
regression, with exact gradients and the closed-form population quantities
of the Gaussian linear model

Parameter vectors are plain float64 numpy arrays of length d. All losses are
mean-reduced over samples.
"""
from dataclasses import dataclass

import numpy as np

from fairfl.config import ModelType
from fairfl.errors import DimensionMismatchError


@dataclass(frozen=True)
class ModelKind:
    kind: ModelType = ModelType.LINEAR_REGRESSION
    ridge_lambda: float = 0.0

    def __post_init__(self):
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")
        if self.kind == ModelType.RIDGE_LOGISTIC and not self.ridge_lambda > 0:
            raise ValueError("ridge_logistic needs ridge_lambda > 0 to be strongly convex")

    @property
    def is_linear(self):
        return self.kind == ModelType.LINEAR_REGRESSION

    @classmethod
    def from_config(cls, cfg):
        if cfg.model_kind == ModelType.RIDGE_LOGISTIC:
            return cls(ModelType.RIDGE_LOGISTIC, cfg.ridge_lambda)
        return cls(ModelType.LINEAR_REGRESSION, 0.0)


LINEAR = ModelKind(ModelType.LINEAR_REGRESSION)


def _check_dim(w, features):
    d = features.shape[-1]
    if w.shape != (d,):
        raise DimensionMismatchError(d, w.shape[0] if w.ndim == 1 else w.size)


def _sigmoid(z):
    # tanh form never overflows, even for |z| > 700
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# --- losses and gradients ---

def empirical_loss(model, w, data):
    """
    Mean training loss of w on one agent's data.

    linear: (1/n) sum (w^T x - y)^2
    ridge_logistic: mean negative log-likelihood + (lambda/2)||w||^2
    """
    w = np.asarray(w, dtype=np.float64)
    _check_dim(w, data.features)
    z = data.features @ w
    if model.is_linear:
        residual = z - data.labels
        return float(np.mean(residual * residual))
    nll = np.logaddexp(0.0, z) - data.labels * z
    return float(np.mean(nll) + 0.5 * model.ridge_lambda * (w @ w))


def gradient(model, w, data, rows=None):
    """
    Exact gradient of empirical_loss.

    Args:
        rows: Optional sample indices; the gradient is then the mean over
            those rows only (minibatch steps)
    """
    w = np.asarray(w, dtype=np.float64)
    _check_dim(w, data.features)
    X = data.features if rows is None else data.features[rows]
    y = data.labels if rows is None else data.labels[rows]
    n = X.shape[0]
    z = X @ w
    if model.is_linear:
        return (2.0 / n) * (X.T @ (z - y))
    return (X.T @ (_sigmoid(z) - y)) / n + model.ridge_lambda * w


def finite_difference_gradient(model, w, data, h=1e-5):
    """Central differences of empirical_loss, one coordinate at a time"""
    w = np.asarray(w, dtype=np.float64)
    grad = np.empty_like(w)
    for i in range(w.shape[0]):
        step = np.zeros_like(w)
        step[i] = h
        grad[i] = (empirical_loss(model, w + step, data) - empirical_loss(model, w - step, data)) / (2 * h)
    return grad


def smoothness_estimate(model, data):
    """
    Upper bound L on the Hessian norm of empirical_loss on this data.

    linear: 2 * lambda_max(X^T X / n)
    ridge_logistic: lambda_max(X^T X / n) / 4 + lambda
    """
    X = data.features
    top = float(np.linalg.eigvalsh(X.T @ X / X.shape[0])[-1])
    if model.is_linear:
        return 2.0 * top
    return 0.25 * top + model.ridge_lambda


def solve_least_squares(data):
    """Ordinary least squares fit of the linear model (the empirical minimizer)"""
    solution, *_ = np.linalg.lstsq(data.features, data.labels, rcond=None)
    return solution


# --- prediction ---

def predict(model, w, x):
    """
    h_w(x) for one sample (d-vector) or a batch (n x d).

    Regression returns w^T x; logistic returns class probabilities [P(0), P(1)]
    along the last axis.
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_dim(w, x)
    z = x @ w
    if model.is_linear:
        return z
    p = _sigmoid(z)
    return np.stack([1.0 - p, p], axis=-1)


def prediction_loss(model, predictions, labels):
    """
    Mean loss of already-formed predictions (ensemble-then-loss).

    Squared error for regression, negative log-likelihood of the true class
    for classification. No ridge term: this is the population-loss estimate.
    """
    if model.is_linear:
        residual = predictions - labels
        return float(np.mean(residual * residual))
    picked = predictions[np.arange(labels.shape[0]), labels]
    return float(np.mean(-np.log(np.maximum(picked, np.finfo(np.float64).tiny))))


def prediction_accuracy(predictions, labels):
    """Share of samples whose most probable class is the label"""
    return float(np.mean(np.argmax(predictions, axis=-1) == labels))


# --- closed forms for the Gaussian linear model ---

def analytic_population_loss_linear(w, mu, delta, sigma):
    """sigma^2 + delta^2 ||w - mu||^2: exact population MSE of w"""
    return float(sigma ** 2 + analytic_excess_risk_linear(w, mu, delta))


def analytic_excess_risk_linear(w, mu, delta):
    """delta^2 ||w - mu||^2"""
    diff = np.asarray(w, dtype=np.float64) - np.asarray(mu, dtype=np.float64)
    if diff.ndim != 1:
        raise DimensionMismatchError(np.asarray(mu).size, np.asarray(w).size)
    return float(delta ** 2 * (diff @ diff))


def mixture_predict(model, weights, pi_row, x):
    """
    sum_m pi_m h_{w_m}(x), accumulated in cluster order.

    For classification the result stays a probability vector because the
    weights form a convex combination.
    """
    out = None
    for m in range(len(weights)):
        term = pi_row[m] * predict(model, weights[m], x)
        out = term if out is None else out + term
    return out


def accuracy(model, w, data):
    """Classification accuracy of a single model on one agent's data"""
    if model.is_linear:
        raise ValueError("accuracy is only defined for ridge_logistic models")
    return prediction_accuracy(predict(model, w, data.features), data.labels)
