import numpy as np

from ..categories import N_RACES
from ..errors import DataError


def softmax(scores):
    scores = np.asarray(scores, dtype=float)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y).astype(np.intp)
    if X.ndim != 2:
        raise DataError("feature matrix must be two-dimensional")
    if len(X) != len(y):
        raise DataError(f"{len(X)} feature rows but {len(y)} labels")
    if len(y) == 0:
        raise DataError("no training rows")
    if not np.all(np.isfinite(X)):
        raise DataError("features must be finite")
    if y.min() < 0 or y.max() >= N_RACES:
        raise DataError("labels must be race codes 0..4")
    return X, y


def base_rates(y, weights=None):
    counts = np.bincount(y, weights=weights, minlength=N_RACES).astype(float)
    return counts / counts.sum()


def log_loss(y, probs, eps=1e-15):
    p = np.clip(probs[np.arange(len(y)), y], eps, 1.0)
    return float(-np.mean(np.log(p)))
