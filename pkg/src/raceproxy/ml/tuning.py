"""Latin hypercube hyperparameter search with stratified k-fold CV."""

import csv
import dataclasses

import numpy as np
from scipy.stats import qmc

from ..categories import N_RACES
from ..errors import ConfigurationError, DataError
from .base import check_xy, log_loss
from .models import DEFAULT_RANGES, check_family, fit_model


@dataclasses.dataclass(frozen=True)
class TuneSpec:
    """Search settings; ``ranges`` maps family -> {param: (lo, hi, scale)}."""

    ranges: dict = dataclasses.field(default_factory=lambda: dict(DEFAULT_RANGES))
    n_points: int = 10
    folds: int = 5
    tune_size: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigurationError("fold count must be >= 2")
        if self.n_points < 1:
            raise ConfigurationError("hypercube sample count must be >= 1")

    def box(self, family):
        return dict(self.ranges.get(family, DEFAULT_RANGES.get(family, {})))


def latin_hypercube(box, n_points, seed=0):
    """``n_points`` hyperparameter dicts spread over ``box``.

    ``box`` maps names to ``(low, high, scale)``; ``scale`` is ``"linear"``,
    ``"log"`` (uniform in log space) or ``"int"`` (linear, rounded).
    """
    if not box:
        raise ConfigurationError("empty hyperparameter range box")
    names = sorted(box)
    unit = qmc.LatinHypercube(d=len(names), seed=seed).random(n_points)
    points = []
    for row in unit:
        point = {}
        for u, name in zip(row, names):
            lo, hi, scale = box[name]
            if hi < lo:
                raise ConfigurationError(f"range for {name} has high < low")
            if scale == "log":
                if lo <= 0:
                    raise ConfigurationError(f"log range for {name} must be positive")
                value = float(np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo))))
            elif scale == "int":
                value = int(np.floor(lo + u * (hi - lo + 1)))
                value = min(value, int(hi))
            elif scale == "linear":
                value = float(lo + u * (hi - lo))
            else:
                raise ConfigurationError(f"unknown scale {scale!r} for {name}")
            point[name] = value
        points.append(point)
    return points


def stratified_folds(y, k, seed=0):
    """Fold index per row, balancing every class across the ``k`` folds."""
    y = np.asarray(y)
    if len(y) < k:
        raise DataError(f"{len(y)} rows cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.intp)
    offset = 0
    for c in range(N_RACES):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        fold[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return fold


@dataclasses.dataclass
class TuneResult:
    best: dict
    table: list  # one dict per hypercube point: params, per-fold and mean loss

    def write_csv(self, path, delimiter=","):
        if not self.table:
            return
        fields = list(self.table[0])
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields, delimiter=delimiter,
                                    lineterminator="\n")
            writer.writeheader()
            for row in self.table:
                writer.writerow({k: repr(v) if isinstance(v, float) else v
                                 for k, v in row.items()})


def cross_validate(family, X, y, params, folds, seed=0, layout=None):
    """Held-fold log-loss for each fold."""
    losses = []
    for f in range(folds.max() + 1):
        test = folds == f
        model = fit_model(family, X[~test], y[~test], params, seed=seed,
                          layout=layout)
        losses.append(log_loss(y[test], model.predict_proba(X[test])))
    return losses


def tune(spec, family, X, y, layout=None, points=None):
    """Pick the hypercube point with the lowest mean held-fold log-loss.

    Rows beyond ``spec.tune_size`` are subsampled away first. Ties go to
    the earliest point. ``points`` overrides the hypercube sample.
    """
    check_family(family)
    X, y = check_xy(X, y)
    if points is None:
        points = latin_hypercube(spec.box(family), spec.n_points, seed=spec.seed)
    rng = np.random.default_rng(spec.seed)
    if len(y) > spec.tune_size:
        keep = np.sort(rng.choice(len(y), spec.tune_size, replace=False))
        X, y = X[keep], y[keep]
    if len(y) < spec.folds:
        raise DataError(f"{len(y)} tuning rows cannot fill {spec.folds} folds")
    folds = stratified_folds(y, spec.folds, seed=spec.seed)
    table = []
    for i, point in enumerate(points):
        losses = cross_validate(family, X, y, point, folds, seed=spec.seed,
                                layout=layout)
        row = {"point": i, **point}
        row.update({f"fold{j}": v for j, v in enumerate(losses)})
        row["mean_log_loss"] = float(np.mean(losses))
        table.append(row)
    best_i = int(np.argmin([r["mean_log_loss"] for r in table]))
    return TuneResult(best=dict(points[best_i]), table=table)
