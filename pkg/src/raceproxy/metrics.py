"""Individual- and tract-level evaluation metrics."""

import dataclasses

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .categories import N_RACES, RACE_NAMES
from .errors import ConfigurationError, UndefinedMetricError

N_BINS = 10


def auc_one_vs_rest(scores, labels):
    """Mann-Whitney AUC: P(random positive outscores random negative), ties 1/2.

    Raises
    ------
    UndefinedMetricError
        ``labels`` are all positive or all negative.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one "
                                   "negative label")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclasses.dataclass(frozen=True)
class CalibrationCurve:
    """Decile bins ``[0, .1), ..., [.9, 1.0]``; empty bins have NaN means."""

    mean_predicted: np.ndarray
    observed: np.ndarray
    count: np.ndarray

    @property
    def populated(self):
        return self.count > 0

    def rows(self):
        """Plot-ready ``(bin, mean, observed, n)`` tuples, one per bin."""
        return [(b, float(m), float(o), int(c)) for b, (m, o, c)
                in enumerate(zip(self.mean_predicted, self.observed, self.count))]


def calibration_bin(scores):
    return np.minimum((np.asarray(scores, dtype=float) * N_BINS).astype(int), N_BINS - 1)


def calibration_curve(scores, labels):
    """Observed positive fraction against mean score in ten equal-width bins.

    A score of exactly 1.0 falls in the last bin.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.size and (scores.min() < 0 or scores.max() > 1):
        raise ConfigurationError("calibration scores must lie in [0, 1]")
    b = calibration_bin(scores)
    count = np.bincount(b, minlength=N_BINS)
    sums = np.bincount(b, weights=scores, minlength=N_BINS)
    pos = np.bincount(b, weights=labels, minlength=N_BINS)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, sums / count, np.nan)
        obs = np.where(count > 0, pos / count, np.nan)
    return CalibrationCurve(mean_predicted=mean, observed=obs, count=count)


@dataclasses.dataclass(frozen=True)
class TractAggregate:
    tract_id: str
    estimated: np.ndarray
    true: np.ndarray
    n: int


def aggregate_tracts(dataset, probs, agg="prob"):
    """Estimated and self-reported race shares per tract.

    ``agg="prob"`` averages posterior vectors; ``agg="argmax"`` counts
    each record's most probable race. Tracts come out sorted by id.
    """
    probs = np.asarray(probs, dtype=float)
    if agg == "argmax":
        est = np.zeros_like(probs)
        est[np.arange(len(probs)), probs.argmax(axis=1)] = 1.0
    elif agg == "prob":
        est = probs
    else:
        raise ConfigurationError(f"unknown aggregation {agg!r}; use prob|argmax")
    labels = dataset.label.astype(np.intp)
    if len(labels) and (labels.min() < 0 or labels.max() >= N_RACES):
        raise ConfigurationError("tract aggregation needs a race label on every record")
    tract_ids, inverse = np.unique(dataset.tract_id.astype(str), return_inverse=True)
    n = np.bincount(inverse, minlength=len(tract_ids))
    est_sum = np.zeros((len(tract_ids), N_RACES))
    np.add.at(est_sum, inverse, est)
    true_sum = np.zeros((len(tract_ids), N_RACES))
    np.add.at(true_sum, (inverse, labels), 1.0)
    return [TractAggregate(str(t), est_sum[i] / n[i], true_sum[i] / n[i], int(n[i]))
            for i, t in enumerate(tract_ids)]


def _errors(aggs, race):
    if not aggs:
        raise ConfigurationError("no tract aggregates")
    n = np.array([a.n for a in aggs], dtype=float)
    err = np.array([a.estimated[race] - a.true[race] for a in aggs])
    return n, err


def tract_rmse(aggs, race):
    """Tract-size weighted root-mean-squared share error for one race."""
    n, err = _errors(aggs, race)
    return float(np.sqrt(np.sum(n * err * err) / n.sum()))


def tract_bias(aggs, race):
    """Tract-size weighted mean signed error (positive = overestimate)."""
    n, err = _errors(aggs, race)
    return float(np.sum(n * err) / n.sum())


@dataclasses.dataclass
class EvalReport:
    """Metrics of one method on one evaluation dataset."""

    method: str
    state: str
    layout: str
    auc: dict
    calibration: dict
    rmse: dict
    bias: dict

    def rows(self):
        return [{"state": self.state, "layout": self.layout, "method": self.method,
                 "race": RACE_NAMES[r], "auc": self.auc[r], "rmse": self.rmse[r],
                 "bias": self.bias[r]} for r in range(N_RACES)]


def evaluate(dataset, probs, method, state="", layout="", agg="prob"):
    labels = dataset.label.astype(np.intp)
    aggs = aggregate_tracts(dataset, probs, agg=agg)
    auc, cal, rmse, bias = {}, {}, {}, {}
    for r in range(N_RACES):
        is_r = labels == r
        try:
            auc[r] = auc_one_vs_rest(probs[:, r], is_r)
        except UndefinedMetricError:
            auc[r] = float("nan")
        cal[r] = calibration_curve(probs[:, r], is_r)
        rmse[r] = tract_rmse(aggs, r)
        bias[r] = tract_bias(aggs, r)
    return EvalReport(method, state, layout, auc, cal, rmse, bias)


@dataclasses.dataclass
class FullReport:
    reports: list
    auc: pd.DataFrame
    rmse: pd.DataFrame
    bias: pd.DataFrame

    def long_table(self):
        return pd.DataFrame([row for rep in self.reports for row in rep.rows()])

    def calibration_table(self):
        rows = []
        for rep in self.reports:
            for r, curve in rep.calibration.items():
                for b, m, o, c in curve.rows():
                    rows.append({"state": rep.state, "layout": rep.layout,
                                 "method": rep.method, "race": RACE_NAMES[r],
                                 "bin": b, "mean_predicted": m, "observed": o,
                                 "n": c})
        return pd.DataFrame(rows)

    def text(self, digits=3):
        out = []
        for name, table in (("AUC", self.auc), ("Tract RMSE", self.rmse),
                            ("Tract bias", self.bias)):
            out.append(f"{name}\n{table.to_string(float_format=lambda v: f'{v:.{digits}f}')}")
        return "\n\n".join(out) + "\n"


def full_report(dataset, posteriors, state="", layout="", agg="prob"):
    """Compare methods on one labelled dataset.

    Parameters
    ----------
    posteriors : dict
        Method name -> (n, 5) probability array, in column order.

    Returns
    -------
    FullReport
        Per-method :class:`EvalReport` objects and race x method tables for
        AUC, tract RMSE and tract bias.
    """
    reports = [evaluate(dataset, np.asarray(p, dtype=float), m, state, layout, agg)
               for m, p in posteriors.items()]
    index = pd.Index(RACE_NAMES, name="race")

    def table(attr):
        return pd.DataFrame({rep.method: [getattr(rep, attr)[r] for r in range(N_RACES)]
                             for rep in reports}, index=index)

    return FullReport(reports, table("auc"), table("rmse"), table("bias"))
