"""Reading, canonicalizing and filtering person records.

A :class:`Dataset` is stored column-wise (one numpy array per field) so
that million-row voter files stay cheap; iterating it yields
:class:`PersonRecord` objects for code that wants one row at a time.
"""

import csv
import dataclasses
import logging
import re
import unicodedata
from collections import Counter

import numpy as np
import pandas as pd

from .categories import NO_LABEL, RaceCategory, parse_race, race_label
from .errors import ConfigurationError, DataError

log = logging.getLogger(__name__)

REQUIRED_FIELDS = ("record_id", "surname", "block_id", "state")
OPTIONAL_FIELDS = ("first_name", "middle_name", "race")
ALL_FIELDS = REQUIRED_FIELDS + OPTIONAL_FIELDS
#: column order used by :func:`write_person_file`
FILE_COLUMNS = ("record_id", "surname", "first_name", "middle_name", "state",
                "block_id", "race")

SUFFIXES = frozenset({"JR", "SR", "II", "III", "IV"})
_NOT_AZ = re.compile(r"[^A-Z]+")


def canonicalize_name(raw):
    """Canonical matching key for a name.

    Uppercases, folds diacritics to ASCII, drops a trailing generational
    suffix token (JR, SR, II, III, IV) and removes every character outside
    A-Z.

    >>> canonicalize_name("o'neil jr")
    'ONEIL'
    >>> canonicalize_name("García-Lopez")
    'GARCIALOPEZ'
    """
    if not raw:
        return ""
    folded = unicodedata.normalize("NFKD", raw)
    folded = "".join(c for c in folded if not unicodedata.combining(c)).upper()
    tokens = folded.split()
    while len(tokens) > 1 and tokens[-1].replace(".", "") in SUFFIXES:
        tokens.pop()
    return _NOT_AZ.sub("", "".join(tokens))


def map_unique(values, fn, dtype=object):
    """``[fn(v) for v in values]``, calling ``fn`` once per distinct value."""
    values = values if isinstance(values, np.ndarray) else _obj(values)
    codes, uniques = pd.factorize(values.astype(object, copy=False),
                                  use_na_sentinel=False)
    mapped = np.empty(len(uniques), dtype=dtype)
    mapped[:] = [fn(u) for u in uniques]
    return mapped[codes]


def canonicalize_many(values):
    """Vectorized :func:`canonicalize_name`; each distinct input is processed once."""
    return map_unique(values, canonicalize_name)


_BLOCK_RE = re.compile(r"\d{15}")
_STATE_RE = re.compile(r"[A-Z]{2}")


def valid_block_ids(block_ids):
    """Boolean mask of 15-digit GEOIDs."""
    return map_unique(block_ids, lambda b: bool(_BLOCK_RE.fullmatch(b)), dtype=bool)


@dataclasses.dataclass(frozen=True)
class PersonRecord:
    record_id: str
    surname: str
    block_id: str
    state: str
    first_name: str = ""
    middle_name: str = ""
    label: int = NO_LABEL

    @property
    def tract_id(self):
        return self.block_id[:11]


@dataclasses.dataclass(frozen=True)
class MalformedRow:
    line: int
    reason: str


def _obj(values):
    values = list(values)
    arr = np.empty(len(values), dtype=object)
    arr[:] = values
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered, immutable collection of person records stored by column.

    ``label`` holds :class:`RaceCategory` codes with ``NO_LABEL`` (-1) for
    records that carry no race.
    """

    record_id: np.ndarray
    surname: np.ndarray
    first_name: np.ndarray
    middle_name: np.ndarray
    state: np.ndarray
    block_id: np.ndarray
    label: np.ndarray
    provenance: tuple = ()
    malformed: tuple = ()

    def __post_init__(self):
        n = len(self.record_id)
        for f in ("surname", "first_name", "middle_name", "state", "block_id",
                  "label"):
            if len(getattr(self, f)) != n:
                raise DataError(f"column {f!r} has {len(getattr(self, f))} "
                                f"entries, expected {n}")
        object.__setattr__(self, "label",
                           np.asarray(self.label, dtype=np.int8))
        for f in ("record_id", "surname", "first_name", "middle_name",
                  "state", "block_id", "label"):
            getattr(self, f).setflags(write=False)
        if not self.provenance:
            object.__setattr__(self, "provenance",
                               tuple(sorted(set(self.state.tolist()))))

    @classmethod
    def from_records(cls, records, provenance=()):
        records = list(records)
        return cls(
            record_id=_obj(r.record_id for r in records),
            surname=_obj(r.surname for r in records),
            first_name=_obj(r.first_name for r in records),
            middle_name=_obj(r.middle_name for r in records),
            state=_obj(r.state for r in records),
            block_id=_obj(r.block_id for r in records),
            label=np.array([r.label for r in records], dtype=np.int8),
            provenance=tuple(provenance),
        )

    @classmethod
    def concat(cls, datasets):
        datasets = list(datasets)
        cols = {f: np.concatenate([getattr(d, f) for d in datasets])
                if datasets else _obj([])
                for f in ("record_id", "surname", "first_name", "middle_name",
                          "state", "block_id")}
        label = (np.concatenate([d.label for d in datasets]) if datasets
                 else np.zeros(0, np.int8))
        return cls(label=label, **cols)

    def __len__(self):
        return len(self.record_id)

    def __getitem__(self, i):
        return PersonRecord(
            record_id=self.record_id[i], surname=self.surname[i],
            block_id=self.block_id[i], state=self.state[i],
            first_name=self.first_name[i], middle_name=self.middle_name[i],
            label=int(self.label[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def records(self):
        return list(self)

    @property
    def tract_id(self):
        return _obj(b[:11] for b in self.block_id)

    def take(self, index):
        """Subset by integer index or boolean mask, keeping order."""
        index = np.asarray(index)
        return Dataset(
            record_id=self.record_id[index], surname=self.surname[index],
            first_name=self.first_name[index],
            middle_name=self.middle_name[index], state=self.state[index],
            block_id=self.block_id[index], label=self.label[index],
            provenance=self.provenance)

    def sample(self, n, rng):
        """Order-preserving random subset of ``min(n, len)`` rows."""
        if n >= len(self):
            return self
        return self.take(np.sort(rng.choice(len(self), size=n, replace=False)))

    def same_as(self, other):
        """Field-by-field equality (ignores provenance and malformed reports)."""
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("record_id", "surname", "first_name",
                             "middle_name", "state", "block_id", "label"))

    @property
    def has_labels(self):
        return bool(len(self)) and bool(np.all(self.label >= 0))


def _resolve_schema(header, schema):
    schema = dict(schema or {})
    unknown = set(schema) - set(ALL_FIELDS)
    if unknown:
        raise ConfigurationError(f"unknown logical field(s) in schema: "
                                 f"{sorted(unknown)}")
    resolved = {}
    for field in ALL_FIELDS:
        col = schema.get(field, field)
        if col in header:
            resolved[field] = col
        elif field in REQUIRED_FIELDS:
            raise ConfigurationError(
                f"required column {col!r} (for {field}) missing from header")
    return resolved


def _frame_to_dataset(frame, cols, first_line, provenance=()):
    """Validate one block of raw rows; ``first_line`` is the file line of row 0."""
    n = len(frame)

    def column(field):
        if field in cols:
            return frame[cols[field]].to_numpy(dtype=object)
        return _obj([""] * n)

    record_id = map_unique(column("record_id"), str.strip)
    block = map_unique(column("block_id"), str.strip)
    state = map_unique(column("state"), lambda v: v.strip().upper())
    label = map_unique(column("race"), parse_race)
    bad = {}
    for i in np.flatnonzero(np.equal(label, None)):
        bad[int(i)] = f"unrecognized race label {column('race')[i]!r}"
    label = np.where(np.equal(label, None), NO_LABEL, label).astype(np.int8)

    ok_block = valid_block_ids(block) | (block == "")
    for i in np.flatnonzero(~ok_block):
        bad.setdefault(int(i), f"block_id {block[i]!r} is not a 15-digit GEOID")
    for i in np.flatnonzero(record_id == ""):
        bad.setdefault(int(i), "empty record_id")
    ok_state = map_unique(state, lambda v: bool(_STATE_RE.fullmatch(v)), dtype=bool)
    for i in np.flatnonzero(~ok_state):
        bad.setdefault(int(i), f"state {state[i]!r} is not a 2-letter code")

    malformed = tuple(MalformedRow(first_line + i, bad[i]) for i in sorted(bad))
    keep = np.ones(n, dtype=bool)
    keep[list(bad)] = False
    ds = Dataset(
        record_id=record_id[keep],
        surname=canonicalize_many(column("surname"))[keep],
        first_name=canonicalize_many(column("first_name"))[keep],
        middle_name=canonicalize_many(column("middle_name"))[keep],
        state=state[keep], block_id=block[keep], label=label[keep],
        provenance=provenance, malformed=malformed)
    return ds


def _read_frame(path, delimiter, **kw):
    try:
        return pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False,
                           na_filter=False, quoting=csv.QUOTE_MINIMAL,
                           engine="c", **kw)
    except FileNotFoundError:
        raise
    except pd.errors.ParserError as exc:
        raise DataError(f"{path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: file has no header row") from exc


def check_unique_ids(record_id, where=""):
    counts = Counter(record_id.tolist())
    dups = sorted(k for k, v in counts.items() if v > 1)
    if dups:
        shown = ", ".join(dups[:10]) + (" ..." if len(dups) > 10 else "")
        raise DataError(f"duplicate record_id{where}: {shown} "
                        f"({len(dups)} distinct duplicated)")


def parse_person_file(path, schema=None, delimiter=","):
    """Read a delimiter-separated person file into a :class:`Dataset`.

    Parameters
    ----------
    path : str or path-like
    schema : dict, optional
        Maps logical field names (``record_id``, ``surname``, ``block_id``,
        ``state``, ``first_name``, ``middle_name``, ``race``) to header
        names. Unmapped fields are looked up under their logical name.
    delimiter : str

    Returns
    -------
    Dataset
        Rows that fail validation are left out and listed in
        ``Dataset.malformed`` with their 1-based file line numbers.

    Raises
    ------
    ConfigurationError
        A required column is absent.
    DataError
        Duplicate ``record_id`` values, or the file cannot be tokenized.
    OSError
        The file cannot be opened.
    """
    frame = _read_frame(path, delimiter)
    cols = _resolve_schema(list(frame.columns), schema)
    ds = _frame_to_dataset(frame, cols, first_line=2)
    for m in ds.malformed:
        log.warning("%s:%d: %s", path, m.line, m.reason)
    check_unique_ids(ds.record_id, f" in {path}")
    return ds


def iter_person_chunks(path, schema=None, delimiter=",", chunksize=100_000):
    """Stream a person file as a sequence of :class:`Dataset` chunks.

    Duplicate ids are not checked across chunks; memory stays bounded by
    ``chunksize``.
    """
    header = pd.read_csv(path, sep=delimiter, dtype=str, nrows=0).columns
    cols = _resolve_schema(list(header), schema)
    line = 2
    reader = _read_frame(path, delimiter, chunksize=chunksize)
    for frame in reader:
        ds = _frame_to_dataset(frame, cols, first_line=line)
        for m in ds.malformed:
            log.warning("%s:%d: %s", path, m.line, m.reason)
        line += len(frame)
        yield ds


def write_person_file(dataset, path, delimiter=","):
    """Write ``dataset`` in the default column layout (see ``FILE_COLUMNS``)."""
    frame = pd.DataFrame({
        "record_id": dataset.record_id,
        "surname": dataset.surname,
        "first_name": dataset.first_name,
        "middle_name": dataset.middle_name,
        "state": dataset.state,
        "block_id": dataset.block_id,
        "race": [race_label(int(c)) for c in dataset.label],
    }, columns=list(FILE_COLUMNS))
    frame.to_csv(path, sep=delimiter, index=False, lineterminator="\n")


@dataclasses.dataclass(frozen=True)
class RemovalReport:
    """Counts of records dropped by :func:`filter_for_analysis`, by reason."""

    unknown: int = 0
    missing_label: int = 0
    empty_surname: int = 0
    bad_block: int = 0
    kept: int = 0

    @property
    def removed(self):
        return self.unknown + self.missing_label + self.empty_surname + self.bad_block

    def counts(self):
        return {k: v for k, v in dataclasses.asdict(self).items()
                if v or k == "kept"}

    def summary(self):
        return (f"kept {self.kept} records, removed {self.removed}: "
                f"{self.unknown} unknown race, {self.missing_label} missing race, "
                f"{self.empty_surname} empty surname, "
                f"{self.bad_block} missing/invalid block")


def filter_for_analysis(dataset, require_label=False):
    """Drop records that cannot be analysed.

    Each removed record is counted once, under the first matching reason in
    the order: Unknown race, missing race (only when ``require_label``),
    empty surname, empty or invalid block id.

    Returns
    -------
    (Dataset, RemovalReport)
    """
    unknown = dataset.label == RaceCategory.UNKNOWN
    missing = (dataset.label == NO_LABEL) if require_label else np.zeros(len(dataset), bool)
    empty = dataset.surname == ""
    bad_block = ~valid_block_ids(dataset.block_id)

    c_unknown = unknown
    c_missing = missing & ~c_unknown
    taken = c_unknown | c_missing
    c_empty = empty & ~taken
    taken |= c_empty
    c_block = bad_block & ~taken
    taken |= c_block

    report = RemovalReport(
        unknown=int(c_unknown.sum()), missing_label=int(c_missing.sum()),
        empty_surname=int(c_empty.sum()), bad_block=int(c_block.sum()),
        kept=int((~taken).sum()))
    if not taken.any():
        return dataset, report
    return dataset.take(~taken), report
