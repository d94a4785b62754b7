import numpy as np
import pytest

from raceproxy import synth
from raceproxy.ingest import Dataset, PersonRecord
from raceproxy.tables import (TableSet, geo_table_from_counts, name_table_from_counts,
                              surname_table_from_counts)


@pytest.fixture(scope="session")
def small_corpus():
    """Four synthetic states of 3,000 records each."""
    return synth.generate(synth.default_spec(seed=11, n_records=3000))


@pytest.fixture(scope="session")
def small_tables(small_corpus):
    surnames, geo = small_corpus.exact_tables()
    return surnames, geo


@pytest.fixture(scope="session")
def corpus_dir(small_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    small_corpus.write(out)
    return out


@pytest.fixture
def toy_tables():
    """Two surnames, two blocks, tiny name tables."""
    surnames = surname_table_from_counts(
        ["SMITH", "GARCIA"], [[70, 20, 5, 3, 2], [6, 0, 94, 0, 0]])
    geo = geo_table_from_counts(
        ["370010001001001", "370010001001002"],
        [[30, 10, 5, 5, 5], [70, 30, 5, 15, 5]])
    first = name_table_from_counts(["JOHN", "MARIA"], [[5, 3, 1, 1, 1], [1, 1, 6, 1, 1]],
                                   "first", floor=1.0, training_states=("XA", "XB", "XC"),
                                   held_out="XD")
    middle = name_table_from_counts(["LEE", "ANN"], [[2, 2, 1, 3, 1], [3, 1, 1, 1, 1]],
                                    "middle", floor=1.0, training_states=("XA", "XB", "XC"),
                                    held_out="XD")
    return TableSet(surnames, geo, first, middle)


def person(surname="SMITH", block="370010001001001", first="", middle="", state="XD",
           label=-1, record_id="r1"):
    return PersonRecord(record_id=record_id, surname=surname, block_id=block, state=state,
                        first_name=first, middle_name=middle, label=label)


def dataset(rows):
    return Dataset.from_records(rows)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
