"""Gradient-boosted trees with a softmax link.

Each iteration adds one regression tree per class, fitted to the
gradient and (diagonal) hessian of the multinomial log-loss at the
current scores. A tree ``f`` is penalized by

    gamma * (number of leaves) + 0.5 * leaf_penalty * sum(leaf weights ** 2)

which gives leaf weights ``-G / (H + leaf_penalty)``.
"""

import dataclasses
import logging

import numpy as np

from ..categories import N_RACES
from ..errors import DivergenceError
from .base import base_rates, check_xy, log_loss, softmax
from .trees import Binner, TreeModel, grow_newton_tree

log = logging.getLogger(__name__)

_MIN_RATE = 1e-12


@dataclasses.dataclass(frozen=True, eq=False)
class GbmModel:
    """Boosted ensemble; ``trees[t * 5 + k]`` is iteration ``t``, class ``k``.

    ``scales`` holds the multiplier applied to each iteration's trees
    (the learning rate, possibly reduced by the step safeguard).
    """

    base_rates: np.ndarray
    trees: tuple = ()
    scales: tuple = ()
    learning_rate: float = 0.1
    loss_history: tuple = ()
    family: str = "gbm"
    layout: str = None
    params: dict = dataclasses.field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.trees) // N_RACES

    @property
    def init_scores(self):
        return np.log(np.maximum(self.base_rates, _MIN_RATE))

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        F = np.tile(self.init_scores, (len(X), 1))
        for t in range(self.iterations):
            for k in range(N_RACES):
                tree = self.trees[t * N_RACES + k]
                F[:, k] += self.scales[t] * tree.value[tree.apply(X), 0]
        return F

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if not self.trees:
            return np.tile(self.base_rates, (len(X), 1))
        return softmax(self.decision_function(X))

    def to_dict(self):
        return {"base_rates": self.base_rates.tolist(),
                "trees": [t.to_dict() for t in self.trees],
                "scales": list(self.scales), "learning_rate": self.learning_rate,
                "loss_history": list(self.loss_history)}

    @classmethod
    def from_dict(cls, d, **meta):
        return cls(base_rates=np.array(d["base_rates"], dtype=float),
                   trees=tuple(TreeModel.from_dict(t) for t in d["trees"]),
                   scales=tuple(d["scales"]), learning_rate=d["learning_rate"],
                   loss_history=tuple(d["loss_history"]), **meta)


def train_gbm(X, y, iterations=100, learning_rate=0.1, max_depth=4, gamma=0.0,
              leaf_penalty=1.0, min_leaf=1, seed=0, layout=None, max_halvings=30):
    """Fit a boosted ensemble.

    After each iteration the training log-loss is recomputed; if it rose,
    that iteration's trees are shrunk by halving until it no longer does,
    so ``loss_history`` is non-increasing. ``learning_rate=0`` returns the
    same model as ``iterations=0``.

    Raises
    ------
    DivergenceError
        Scores become non-finite.
    """
    X, y = check_xy(X, y)
    rates = base_rates(y)
    params = {"iterations": iterations, "learning_rate": learning_rate,
              "max_depth": max_depth, "gamma": gamma,
              "leaf_penalty": leaf_penalty, "min_leaf": min_leaf}
    if iterations == 0 or learning_rate == 0:
        return GbmModel(base_rates=rates, learning_rate=learning_rate,
                        loss_history=(), layout=layout, params=params)

    binner = Binner(seed=seed).fit(X)
    B = binner.transform(X)
    n = len(y)
    Y = np.zeros((n, N_RACES))
    Y[np.arange(n), y] = 1.0
    F = np.tile(np.log(np.maximum(rates, _MIN_RATE)), (n, 1))
    P = softmax(F)
    loss = log_loss(y, P)
    history = [loss]
    trees, scales = [], []
    for t in range(iterations):
        grad = P - Y
        hess = np.maximum(P * (1.0 - P), 1e-16)
        step_trees = []
        delta = np.zeros_like(F)
        for k in range(N_RACES):
            tree = grow_newton_tree(B, binner, grad[:, k], hess[:, k], max_depth,
                                    min_leaf=min_leaf, gamma=gamma,
                                    leaf_penalty=leaf_penalty)
            step_trees.append(tree)
            delta[:, k] = tree.value[tree.apply(X), 0]
        scale = learning_rate
        for _ in range(max_halvings):
            F_new = F + scale * delta
            if not np.all(np.isfinite(F_new)):
                raise DivergenceError(f"boosting scores non-finite at iteration {t} "
                                      f"(learning rate {learning_rate:g})")
            P_new = softmax(F_new)
            new_loss = log_loss(y, P_new)
            if new_loss <= loss:
                break
            scale *= 0.5
        else:
            log.debug("iteration %d: no loss decrease; contribution dropped", t)
            scale, F_new, P_new, new_loss = 0.0, F, P, loss
        if scale != learning_rate:
            log.debug("iteration %d: step shrunk to %g", t, scale)
        F, P, loss = F_new, P_new, new_loss
        trees.extend(step_trees)
        scales.append(scale)
        history.append(loss)
    return GbmModel(base_rates=rates, trees=tuple(trees), scales=tuple(scales),
                    learning_rate=learning_rate, loss_history=tuple(history),
                    layout=layout, params=params)
