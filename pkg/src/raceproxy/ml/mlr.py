"""Multinomial logistic regression with an optional elastic-net penalty.

Log-odds of each race against the reference category (Other) are linear
in the features. Features are standardized before fitting, and the
penalty

    lam * ((1 - delta) * sum(W**2) + delta * sum(|W|))

applies to the standardized, non-intercept coefficients. The smooth part
is minimized by accelerated proximal gradient descent (full batch); the
absolute-value part is handled by soft-thresholding.
"""

import dataclasses
import logging

import numpy as np

from ..categories import N_RACES
from ..errors import ConfigurationError, DataError, DivergenceError
from .base import softmax, check_xy

log = logging.getLogger(__name__)

REFERENCE = N_RACES - 1


@dataclasses.dataclass(frozen=True)
class ElasticNetConfig:
    lam: float = 0.0
    delta: float = 0.5

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigurationError(f"lambda must be >= 0, got {self.lam}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigurationError(f"delta must be in [0, 1], got {self.delta}")


@dataclasses.dataclass(frozen=True, eq=False)
class MlrModel:
    """Fitted coefficients on the original feature scale.

    ``coef`` has shape (5, n_features + 1); column 0 is the intercept and
    the reference row (Other) is identically zero.
    """

    coef: np.ndarray
    layout: str = None
    loss: float = float("nan")
    n_iter: int = 0
    converged: bool = False
    family: str = "mlr"
    params: dict = dataclasses.field(default_factory=dict)

    @property
    def n_features(self):
        return self.coef.shape[1] - 1

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ConfigurationError(f"model expects {self.n_features} features, "
                                     f"got {X.shape[1]}")
        return self.coef[:, 0] + X @ self.coef[:, 1:].T

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def to_dict(self):
        return {"coef": self.coef.tolist(), "loss": self.loss,
                "n_iter": self.n_iter, "converged": self.converged}

    @classmethod
    def from_dict(cls, d, **meta):
        return cls(coef=np.array(d["coef"], dtype=float), loss=d["loss"],
                   n_iter=d["n_iter"], converged=d["converged"], **meta)


def standardize(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd, mu, sd


def smooth_objective(theta, Z, Y, lam=0.0, delta=0.0):
    """Mean negative log-likelihood plus the squared penalty, with gradient.

    Parameters
    ----------
    theta : (4, p + 1) array
        Intercept in column 0; rows are the non-reference classes.
    Z : (n, p) array
    Y : (n, 5) one-hot labels

    Returns
    -------
    value : float
    grad : (4, p + 1) array
    """
    n = Z.shape[0]
    scores = np.zeros((n, N_RACES))
    scores[:, :REFERENCE] = theta[:, 0] + Z @ theta[:, 1:].T
    m = scores.max(axis=1, keepdims=True)
    shifted = scores - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    nll = -(Y * logp).sum() / n
    resid = (np.exp(logp) - Y)[:, :REFERENCE]
    grad = np.empty_like(theta)
    grad[:, 0] = resid.sum(axis=0) / n
    grad[:, 1:] = resid.T @ Z / n
    W = theta[:, 1:]
    ridge = lam * (1.0 - delta)
    value = nll + ridge * np.sum(W * W)
    grad[:, 1:] += 2.0 * ridge * W
    return value, grad


def l1_penalty(theta, lam, delta):
    return lam * delta * np.abs(theta[:, 1:]).sum()


def _prox(theta, thresh):
    out = theta.copy()
    W = out[:, 1:]
    out[:, 1:] = np.sign(W) * np.maximum(np.abs(W) - thresh, 0.0)
    return out


def lipschitz_bound(Z, lam=0.0, delta=0.0):
    """Upper bound on the curvature of :func:`smooth_objective`."""
    A = np.hstack([np.ones((Z.shape[0], 1)), Z])
    top = np.linalg.eigvalsh(A.T @ A / Z.shape[0])[-1]
    return 0.5 * top + 2.0 * lam * (1.0 - delta)


def train_mlr(X, y, reg=None, step=None, max_epochs=5000, tol=1e-8, seed=0,
              layout=None):
    """Fit a multinomial logistic regression.

    Parameters
    ----------
    X : (n, p) array
    y : (n,) int array of race codes
    reg : ElasticNetConfig, optional
        ``None`` fits the unpenalized model.
    step : float, optional
        Gradient step size; defaults to 1 / curvature bound.
    max_epochs : int
        Full passes over the data.
    tol : float
        Stop when the largest parameter change per step falls below it.
    seed : int
        Recorded only: the full-batch schedule is deterministic.

    Raises
    ------
    DivergenceError
        The objective becomes non-finite.
    """
    X, y = check_xy(X, y)
    if np.unique(y).size < 2:
        raise DataError("multinomial regression needs at least two distinct labels")
    lam, delta = (reg.lam, reg.delta) if reg is not None else (0.0, 0.0)
    Z, mu, sd = standardize(X)
    Y = np.zeros((len(y), N_RACES))
    Y[np.arange(len(y)), y] = 1.0
    if step is None:
        step = 1.0 / lipschitz_bound(Z, lam, delta)
    thresh = step * lam * delta

    theta = np.zeros((REFERENCE, X.shape[1] + 1))
    momentum = theta.copy()
    t = 1.0
    converged = False
    it = 0
    for it in range(1, max_epochs + 1):
        value, grad = smooth_objective(momentum, Z, Y, lam, delta)
        if not np.isfinite(value):
            raise DivergenceError(f"MLR objective became non-finite at epoch {it} "
                                  f"with step size {step:g}")
        new = _prox(momentum - step * grad, thresh)
        if not np.all(np.isfinite(new)):
            raise DivergenceError(f"MLR coefficients became non-finite at epoch "
                                  f"{it} with step size {step:g}")
        change = np.max(np.abs(new - theta))
        # restart momentum when it points uphill
        if np.sum((momentum - new) * (new - theta)) > 0:
            t = 1.0
            momentum = new
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            momentum = new + ((t - 1.0) / t_next) * (new - theta)
            t = t_next
        theta = new
        if change < tol:
            converged = True
            break

    value, _ = smooth_objective(theta, Z, Y, lam, delta)
    value += l1_penalty(theta, lam, delta)
    if not np.isfinite(value):
        raise DivergenceError(f"MLR objective non-finite with step size {step:g}")
    if not converged:
        log.info("MLR stopped after %d epochs without reaching tol=%g", it, tol)

    W = theta[:, 1:] / sd
    b = theta[:, 0] - W @ mu
    coef = np.zeros((N_RACES, X.shape[1] + 1))
    coef[:REFERENCE, 0] = b
    coef[:REFERENCE, 1:] = W
    params = {"lambda": lam, "delta": delta} if reg is not None else {}
    return MlrModel(coef=coef, layout=layout, loss=float(value), n_iter=it,
                    converged=converged, family="elnet" if reg is not None else "mlr",
                    params=params)


def predict_mlr(model, X):
    """Class probabilities for one feature vector or a matrix of them."""
    return model.predict_proba(X)
