"""Race/ethnicity categories and their fixed vector order."""

import enum

import numpy as np


class RaceCategory(enum.IntEnum):
    """The five analysis categories, in the order used by every 5-vector.

    ``UNKNOWN`` is an ingestion-only sentinel; it is removed by
    :func:`raceproxy.ingest.filter_for_analysis` and never indexes a vector.
    """

    WHITE = 0
    BLACK = 1
    HISPANIC = 2
    ASIAN = 3
    OTHER = 4
    UNKNOWN = 5


RACES = tuple(RaceCategory)[:5]
N_RACES = len(RACES)
RACE_NAMES = tuple(r.name.lower() for r in RACES)

#: label code for "no label supplied"
NO_LABEL = -1

_ALIASES = {
    "white": RaceCategory.WHITE,
    "w": RaceCategory.WHITE,
    "nh_white": RaceCategory.WHITE,
    "black": RaceCategory.BLACK,
    "b": RaceCategory.BLACK,
    "nh_black": RaceCategory.BLACK,
    "hispanic": RaceCategory.HISPANIC,
    "h": RaceCategory.HISPANIC,
    "hisp": RaceCategory.HISPANIC,
    "asian": RaceCategory.ASIAN,
    "a": RaceCategory.ASIAN,
    "api": RaceCategory.ASIAN,
    "other": RaceCategory.OTHER,
    "o": RaceCategory.OTHER,
    "oth": RaceCategory.OTHER,
    "unknown": RaceCategory.UNKNOWN,
    "u": RaceCategory.UNKNOWN,
    "unk": RaceCategory.UNKNOWN,
    "missing": RaceCategory.UNKNOWN,
}


def parse_race(text):
    """Map a label string to a code; ``""`` gives ``NO_LABEL``, junk gives ``None``."""
    key = text.strip().lower()
    if not key:
        return NO_LABEL
    cat = _ALIASES.get(key)
    return None if cat is None else int(cat)


def race_label(code):
    """Inverse of :func:`parse_race` for writing files."""
    if code == NO_LABEL:
        return ""
    return RaceCategory(code).name.capitalize()


def one_hot(labels, n=N_RACES):
    labels = np.asarray(labels)
    out = np.zeros((labels.size, n))
    out[np.arange(labels.size), labels] = 1.0
    return out
