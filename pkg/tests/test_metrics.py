import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raceproxy.errors import UndefinedMetricError
from raceproxy.metrics import (TractAggregate, aggregate_tracts, auc_one_vs_rest,
                               calibration_curve, full_report, tract_bias, tract_rmse)

from conftest import dataset, person

T1, T2, T3 = "37001000100", "37001000200", "37001000300"


def pairwise_auc(scores, labels):
    # direct enumeration of positive/negative pairs
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0
               for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def labelled(rows):
    """rows: (tract, label) pairs."""
    return dataset([person(record_id=str(i), block=t + "1001", label=lab)
                    for i, (t, lab) in enumerate(rows)])


def test_auc_examples():
    assert auc_one_vs_rest([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == 0.75
    assert auc_one_vs_rest([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    assert auc_one_vs_rest([0.4] * 6, [1, 0, 1, 0, 0, 1]) == 0.5


def test_auc_single_class():
    with pytest.raises(UndefinedMetricError):
        auc_one_vs_rest([0.1, 0.2], [1, 1])


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40))
def test_auc_matches_pair_enumeration_and_monotone_invariance(pairs):
    scores = np.array([s for s, _ in pairs], dtype=float) / 6
    labels = np.array([l for _, l in pairs])
    if labels.all() or not labels.any():
        return
    auc = auc_one_vs_rest(scores, labels)
    assert auc == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)
    assert auc_one_vs_rest(np.exp(3 * scores) - 7, labels) == pytest.approx(auc, abs=1e-12)


def test_calibration_single_bin():
    curve = calibration_curve([0.05] * 10, [1, 0] * 5)
    assert curve.count.tolist() == [10] + [0] * 9
    assert curve.observed[0] == 0.5 and np.isnan(curve.observed[1:]).all()
    assert len(curve.rows()) == 10


def test_calibration_closed_upper_edge():
    curve = calibration_curve([1.0, 0.9, 0.0, 0.1], [1, 1, 0, 0])
    assert curve.count.tolist() == [1, 1, 0, 0, 0, 0, 0, 0, 0, 2]


def test_calibration_monte_carlo():
    rng = np.random.default_rng(7)
    scores = rng.uniform(size=100_000)
    labels = rng.uniform(size=scores.size) < scores
    curve = calibration_curve(scores, labels)
    assert curve.count.sum() == scores.size
    assert np.max(np.abs(curve.observed - curve.mean_predicted)) <= 0.02


def test_tract_means_two_records():
    ds = labelled([(T1, 0), (T1, 1)])
    (agg,) = aggregate_tracts(ds, np.array([[1, 0, 0, 0, 0], [0, 1, 0, 0, 0.0]]))
    assert agg.estimated.tolist() == [0.5, 0.5, 0, 0, 0] and agg.n == 2


def test_three_tract_hand_average():
    ds = labelled([(T2, 0), (T1, 2), (T3, 3), (T2, 1), (T1, 2), (T1, 4)])
    probs = np.array([[0.5, 0.5, 0, 0, 0],
                      [0, 0, 1, 0, 0],
                      [0.25, 0, 0, 0.75, 0],
                      [0.25, 0.25, 0.25, 0.25, 0],
                      [0, 0, 0.5, 0.5, 0],
                      [0, 0, 0.25, 0, 0.75]])
    aggs = aggregate_tracts(ds, probs)
    assert [a.tract_id for a in aggs] == [T1, T2, T3]
    assert [a.n for a in aggs] == [3, 2, 1]
    assert aggs[0].estimated.tolist() == [0, 0, 1.75 / 3, 0.5 / 3, 0.75 / 3]
    assert aggs[1].estimated.tolist() == [0.375, 0.375, 0.125, 0.125, 0]
    assert aggs[2].estimated.tolist() == [0.25, 0, 0, 0.75, 0]
    assert aggs[0].true.tolist() == [0, 0, 2 / 3, 0, 1 / 3]
    for a in aggs:
        assert abs(a.estimated.sum() - 1) < 1e-12
    arg = aggregate_tracts(ds, probs, agg="argmax")
    assert arg[1].estimated.tolist() == [1.0, 0, 0, 0, 0]


def test_two_tract_weighted_example():
    # tract 1: one record with white error +0.1; tract 2: three with -0.1
    ds = labelled([(T1, 1), (T2, 0), (T2, 0), (T2, 0)])
    probs = np.array([[0.1, 0.9, 0, 0, 0]] + [[0.9, 0, 0.1, 0, 0]] * 3)
    aggs = aggregate_tracts(ds, probs)
    assert tract_bias(aggs, 0) == pytest.approx(-0.05, abs=1e-15)
    assert tract_rmse(aggs, 0) == pytest.approx(0.1, abs=1e-15)
    hand = [TractAggregate("a", np.array([0.1]), np.array([0.0]), 1),
            TractAggregate("b", np.array([0.9]), np.array([1.0]), 3)]
    assert tract_bias(hand, 0) == pytest.approx((0.1 - 0.3) / 4, abs=1e-15)
    assert tract_rmse(hand, 0) == pytest.approx(np.sqrt((0.01 + 0.03) / 4), abs=1e-15)


def test_single_tract_and_exact():
    agg = [TractAggregate("a", np.array([0.3, 0.7]), np.array([0.5, 0.5]), 9)]
    assert tract_bias(agg, 0) == pytest.approx(-0.2) and tract_rmse(agg, 0) == pytest.approx(0.2)
    same = [TractAggregate("a", np.array([0.3]), np.array([0.3]), 2)]
    assert tract_rmse(same, 0) == 0 and tract_bias(same, 0) == 0


def test_report_invariants(small_corpus, small_tables):
    from raceproxy.bisg import posterior_matrix
    from raceproxy.tables import TableSet
    surnames, geo = small_tables
    ds = small_corpus.datasets["SD"]
    bisg, _ = posterior_matrix(ds, TableSet(surnames, geo["SD"]))
    flat = np.tile(np.bincount(ds.label, minlength=5) / len(ds), (len(ds), 1))
    rep = full_report(ds, {"bisg": bisg, "copy": bisg.copy(), "flat": flat}, state="SD")
    assert len(rep.long_table()) == 3 * 5
    assert rep.auc["bisg"].equals(rep.auc["copy"]) and rep.rmse["bisg"].equals(rep.rmse["copy"])
    for method in rep.bias:
        assert abs(rep.bias[method].sum()) <= 1e-9
        assert np.all(rep.rmse[method] >= rep.bias[method].abs() - 1e-15)
    cal = rep.calibration_table()
    assert cal.groupby(["method", "race"])["n"].sum().eq(len(ds)).all()
    assert "AUC" in rep.text()
