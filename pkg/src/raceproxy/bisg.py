"""BISG and its multi-name extension.

Posterior for race ``r`` is proportional to

    P(block | r) * P(r | surname)                          (BISG)
    P(block | r) * P(first | r) * P(middle | r) * P(r | surname)   (extended)

normalized over the five races. A missing attribute drops its factor
instead of zeroing the product.
"""

import dataclasses
import enum

import numpy as np

from .categories import N_RACES, RACE_NAMES
from .errors import ConfigurationError

METHODS = ("bisg", "extended")


class Fallback(enum.IntFlag):
    NONE = 0
    SURNAME_RESIDUAL = 1
    GEO_MISSING = 2
    FIRST_OOV = 4
    MIDDLE_OOV = 8
    ZERO_MASS = 16
    ALL = 31


@dataclasses.dataclass(frozen=True, eq=False)
class PosteriorDistribution:
    probs: np.ndarray
    source: str
    flags: Fallback = Fallback.NONE

    @property
    def argmax(self):
        # np.argmax returns the first maximum: ties go to the lowest index
        return int(np.argmax(self.probs))

    def __eq__(self, other):
        return (isinstance(other, PosteriorDistribution)
                and np.array_equal(self.probs, other.probs)
                and self.source == other.source and self.flags == other.flags)


@dataclasses.dataclass
class BatchReport:
    n: int = 0
    counts: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def from_flags(cls, flags):
        flags = np.asarray(flags)
        counts = {f.name.lower(): int(np.count_nonzero(flags & f))
                  for f in (Fallback.SURNAME_RESIDUAL, Fallback.GEO_MISSING,
                            Fallback.FIRST_OOV, Fallback.MIDDLE_OOV,
                            Fallback.ZERO_MASS)}
        return cls(n=int(flags.size), counts=counts)

    def merge(self, other):
        keys = set(self.counts) | set(other.counts)
        return BatchReport(self.n + other.n,
                           {k: self.counts.get(k, 0) + other.counts.get(k, 0)
                            for k in sorted(keys)})

    def summary(self):
        parts = ", ".join(f"{k}={v}" for k, v in self.counts.items())
        return f"{self.n} records; fallbacks: {parts}"


def combine_factors(prior, geo, geo_ok, names=()):
    """Multiply factors, normalize, and apply the fallback rules.

    Parameters
    ----------
    prior : (n, 5) array
        P(r | surname).
    geo : (n, 5) array
        P(block | r); rows with ``geo_ok`` False are not used.
    geo_ok : (n,) bool array
    names : sequence of (factor (n, 5), present (n,) bool)
        Extra likelihood factors; absent rows are skipped.

    Returns
    -------
    probs : (n, 5) array
    zero_mass : (n,) bool array
        Rows with no positive mass, returned as uniform.
    """
    use_geo = geo_ok & (geo.sum(axis=1) > 0)
    mass = np.where(use_geo[:, None], geo * prior, prior)
    for factor, present in names:
        mass = np.where(present[:, None], mass * factor, mass)
    total = mass.sum(axis=1)
    zero = ~(total > 0)
    safe = np.where(zero, 1.0, total)
    probs = mass / safe[:, None]
    probs[zero] = 1.0 / N_RACES
    return probs, zero, use_geo


def posterior_matrix(dataset, tables, method="bisg"):
    """Posterior probabilities and fallback flags for every record.

    Returns
    -------
    probs : (n, 5) ndarray
    flags : (n,) int ndarray of :class:`Fallback` bits
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown Bayesian method {method!r}")
    prior, matched = tables.surnames.lookup(dataset.surname)
    geo, known = tables.geo.lookup(dataset.block_id)
    flags = np.where(matched, 0, int(Fallback.SURNAME_RESIDUAL))
    factors = []
    if method == "extended":
        tables.require("extended")
        for slot, col, bit in (("first", dataset.first_name, Fallback.FIRST_OOV),
                               ("middle", dataset.middle_name, Fallback.MIDDLE_OOV)):
            table = getattr(tables, slot)
            factor, seen = table.lookup(col)
            present = col != ""
            # an all-zero OOV row (no smoothing) carries no evidence: drop it
            if not np.any(table.oov > 0):
                present = present & seen
            factors.append((factor, present))
            flags = flags | np.where(present & ~seen, int(bit), 0)
    probs, zero, use_geo = combine_factors(prior, geo, known, factors)
    flags = flags | np.where(use_geo, 0, int(Fallback.GEO_MISSING))
    flags = np.where(zero, int(Fallback.ALL), flags)
    return probs, flags.astype(np.int64)


def _single(person, tables, method):
    from .ingest import Dataset

    probs, flags = posterior_matrix(Dataset.from_records([person]), tables, method)
    return PosteriorDistribution(probs=probs[0], source=method,
                                 flags=Fallback(int(flags[0])))


def bisg_posterior(person, tables):
    """P(race | surname, block) for one record."""
    return _single(person, tables, "bisg")


def extended_posterior(person, tables):
    """P(race | surname, block, first name, middle name) for one record."""
    return _single(person, tables, "extended")


def predict_batch(dataset, method, tables):
    """Posteriors for a whole dataset, in input order.

    Returns
    -------
    list of PosteriorDistribution, BatchReport
    """
    probs, flags = posterior_matrix(dataset, tables, method)
    out = [PosteriorDistribution(probs=p, source=method, flags=Fallback(int(f)))
           for p, f in zip(probs, flags)]
    return out, BatchReport.from_flags(flags)


PREDICTION_COLUMNS = tuple(f"p_{r}" for r in RACE_NAMES) + ("pred_race", "fallback")
