import dataclasses
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raceproxy.bisg import (Fallback, bisg_posterior, combine_factors, extended_posterior,
                            posterior_matrix, predict_batch)
from raceproxy.ingest import Dataset
from raceproxy.tables import TableSet, geo_table_from_counts, surname_table_from_counts

from conftest import dataset, person

B1, B2 = "370010001001001", "370010001001002"


def test_hand_example():
    surnames = surname_table_from_counts(["GARCIA"], [[6, 0, 94, 0, 0]])
    geo = geo_table_from_counts([B1, B2], [[2, 1, 1, 1, 1], [998, 1, 999, 1, 1]])
    assert geo.row(B1)[0] == 0.002 and geo.row(B1)[2] == 0.001
    post = bisg_posterior(person(surname="GARCIA"), TableSet(surnames, geo))
    expected = 0.002 * 0.06 / (0.002 * 0.06 + 0.001 * 0.94)
    np.testing.assert_allclose(post.probs, [expected, 0, 1 - expected, 0, 0], atol=1e-15)
    assert round(post.probs[0], 4) == 0.1132 and post.flags == Fallback.NONE
    assert post.argmax == 2


def test_uninformative_geography_returns_prior():
    surnames = surname_table_from_counts(["A"], [[10, 20, 30, 25, 15]])
    geo = geo_table_from_counts([B1, B2], [[1, 2, 3, 4, 5], [1, 2, 3, 4, 5]])
    post = bisg_posterior(person(surname="A"), TableSet(surnames, geo))
    np.testing.assert_allclose(post.probs, surnames.row("A"), atol=1e-15)


def test_degenerate_prior(toy_tables):
    surnames = surname_table_from_counts(["ONLY"], [[5, 0, 0, 0, 0]])
    post = bisg_posterior(person(surname="ONLY"), TableSet(surnames, toy_tables.geo))
    assert post.probs.tolist() == [1, 0, 0, 0, 0]


def test_empty_names_equal_bisg_bitwise(small_corpus, small_tables, toy_tables):
    p = person(surname="GARCIA", block=B2)
    assert extended_posterior(p, toy_tables).probs.tobytes() == \
        bisg_posterior(p, toy_tables).probs.tobytes()
    surnames, geo = small_tables
    ds = small_corpus.datasets["SA"]
    blank = dataclasses.replace(ds, first_name=np.full(len(ds), "", dtype=object),
                                middle_name=np.full(len(ds), "", dtype=object))
    tables = TableSet(surnames, geo["SA"], toy_tables.first, toy_tables.middle)
    a, fa = posterior_matrix(blank, tables, "extended")
    b, fb = posterior_matrix(blank, tables, "bisg")
    assert np.array_equal(a, b) and np.array_equal(fa, fb)


def test_extended_hand_product(toy_tables):
    F = Fraction
    geo = [F(30, 100), F(10, 40), F(5, 10), F(5, 20), F(5, 10)]
    prior = [F(70, 100), F(20, 100), F(5, 100), F(3, 100), F(2, 100)]
    first = [F(6, 9), F(4, 7), F(2, 10), F(2, 5), F(2, 5)]     # JOHN, floor 1, V = 3
    middle = [F(4, 8), F(2, 6), F(2, 5), F(2, 7), F(2, 5)]     # ANN
    mass = [g * p * f * m for g, p, f, m in zip(geo, prior, first, middle)]
    expected = [float(x / sum(mass)) for x in mass]
    post = extended_posterior(person(first="JOHN", middle="ANN"), toy_tables)
    np.testing.assert_allclose(post.probs, expected, rtol=1e-14)


def test_two_race_hand_product():
    surnames = surname_table_from_counts(["A"], [[1, 3, 0, 0, 0]])
    geo = geo_table_from_counts([B1, B2], [[1, 1, 0, 0, 0], [3, 1, 0, 0, 0]])
    probs, zero, _ = combine_factors(surnames.lookup(["A"])[0], geo.lookup([B1])[0],
                                     np.array([True]),
                                     [(np.array([[0.5, 0.25, 0, 0, 0]]), np.array([True])),
                                      (np.array([[0.2, 0.6, 0, 0, 0]]), np.array([True]))])
    # white: 1/4 * 1/4 * 1/2 * 1/5 = 1/160; black: 3/4 * 1/2 * 1/4 * 3/5 = 9/160
    np.testing.assert_allclose(probs[0], [0.1, 0.9, 0, 0, 0], atol=1e-15)
    assert not zero[0]


def test_zero_factor_zeroes_race(toy_tables):
    post = extended_posterior(person(surname="GARCIA", first="MARIA"), toy_tables)
    assert post.probs[1] == 0 and post.probs[3] == 0 and abs(post.probs.sum() - 1) < 1e-12


def test_fallback_flags(toy_tables):
    rows = dataset([person(record_id="a", surname="NOBODY"),
                    person(record_id="b", block="999999999999999"),
                    person(record_id="c", first="XAVIER", middle="LEE"),
                    person(record_id="d", middle="QQ")])
    _, flags = posterior_matrix(rows, toy_tables, "extended")
    assert flags.tolist() == [1, 2, 4, 8]
    _, flags = posterior_matrix(rows, toy_tables, "bisg")
    assert flags.tolist() == [1, 2, 0, 0]


def test_unknown_block_gives_prior(toy_tables):
    post = bisg_posterior(person(surname="GARCIA", block="999999999999999"), toy_tables)
    np.testing.assert_allclose(post.probs, toy_tables.surnames.row("GARCIA"))
    assert post.flags == Fallback.GEO_MISSING


def test_zero_mass_uniform_all_flags():
    surnames = surname_table_from_counts(["W"], [[1, 0, 0, 0, 0]])
    geo = geo_table_from_counts([B1, B2], [[0, 1, 1, 1, 1], [4, 1, 1, 1, 1]])
    post = bisg_posterior(person(surname="W"), TableSet(surnames, geo))
    assert post.probs.tolist() == [0.2] * 5 and post.flags == Fallback.ALL
    assert post.argmax == 0


def test_empty_batch(toy_tables):
    out, report = predict_batch(Dataset.from_records([]), "bisg", toy_tables)
    assert out == [] and report.n == 0


def test_batch_matches_single(toy_tables):
    rows = [person(record_id="a", first="MARIA"),
            person(record_id="b", surname="GARCIA", block=B2, middle="LEE"),
            person(record_id="c", surname="NEW", first="JOHN", middle="ANN")]
    for method, single in (("bisg", bisg_posterior), ("extended", extended_posterior)):
        out, report = predict_batch(dataset(rows), method, toy_tables)
        assert out == [single(p, toy_tables) for p in rows]
        assert report.n == 3


def test_synthetic_rows_are_distributions(small_corpus, small_tables):
    surnames, geo = small_tables
    for code, ds in small_corpus.datasets.items():
        probs, _ = posterior_matrix(ds, TableSet(surnames, geo[code]), "bisg")
        assert np.all(probs >= 0)
        assert np.max(np.abs(probs.sum(axis=1) - 1)) <= 1e-9


def test_unknown_method(toy_tables):
    from raceproxy.errors import ConfigurationError
    with pytest.raises(ConfigurationError):
        posterior_matrix(dataset([person()]), toy_tables, "em")


unit = st.floats(0.01, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(unit, min_size=5, max_size=5), st.lists(unit, min_size=5, max_size=5),
       st.lists(unit, min_size=5, max_size=5), st.floats(1e-3, 1e3))
def test_scale_invariance(prior, geo, name, c):
    prior = np.array([prior]) / sum(prior)
    geo, name = np.array([geo]), np.array([name])
    ok = np.array([True])
    base, _, _ = combine_factors(prior, geo, ok, [(name, ok)])
    for scaled in ((c * prior, geo, name), (prior, c * geo, name), (prior, geo, c * name)):
        out, _, _ = combine_factors(scaled[0], scaled[1], ok, [(scaled[2], ok)])
        np.testing.assert_allclose(out, base, rtol=1e-12, atol=1e-15)
    uniform, _, _ = combine_factors(prior, geo, ok, [(np.full((1, 5), 0.3), ok)])
    plain, _, _ = combine_factors(prior, geo, ok)
    np.testing.assert_allclose(uniform, plain, rtol=1e-12)
