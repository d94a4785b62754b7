"""Probability lookup tables and feature assembly.

Four tables feed every method:

* ``SurnameTable``   P(race | surname), from a Census-style surname list
* ``GeoTable``       P(block | race), from block race counts
* ``NameTable``      P(first or middle name | race), from labelled records

:func:`make_feature_matrix` stacks their rows into the 10- or 20-column
predictor matrix used by the supervised models.
"""

import dataclasses
import hashlib
import json
import logging
import os
import warnings

import numpy as np
import pandas as pd

from .categories import N_RACES, RACE_NAMES
from .errors import ConfigurationError, DataError, LeakageError
from .ingest import canonicalize_many, valid_block_ids

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
LAYOUTS = ("base", "extended")
SUPPRESSED = "(S)"
RESIDUAL_NAMES = frozenset({"ALLOTHERNAMES"})

# raw column -> race index; several raw columns may feed one race
_COUNT_COLUMNS = {
    "white": 0, "black": 1, "hispanic": 2, "asian": 3, "api": 3,
    "other": 4, "aian": 4, "2prace": 4,
}
_PCT_COLUMNS = {"pct" + k: v for k, v in _COUNT_COLUMNS.items()}


def n_features(layout):
    if layout not in LAYOUTS:
        raise ConfigurationError(f"unknown layout {layout!r}; use base|extended")
    return 10 if layout == "base" else 20


def _lower_columns(frame):
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    return frame


def _read_table(path, delimiter):
    frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False,
                        na_filter=False)
    return _lower_columns(frame)


def _to_number(text, path, line, column):
    try:
        value = float(text.replace(",", "")) if text.strip() else 0.0
    except ValueError:
        raise DataError(f"{path}:{line}: column {column!r} has non-numeric "
                        f"value {text!r}") from None
    if not np.isfinite(value):
        raise DataError(f"{path}:{line}: column {column!r} is not finite")
    if value < 0:
        raise DataError(f"{path}:{line}: negative count {value} in {column!r}")
    return value


def _race_matrix(frame, path, mapping, total_col, fixed_total):
    """Parse race columns, redistributing suppressed cells.

    Returns an (n, 5) array of non-negative masses. A row's unaccounted
    mass (row total minus known cells) is split equally across its
    suppressed cells before raw columns are folded into the five races.
    """
    raw_cols = [c for c in frame.columns if c in mapping]
    missing = sorted({RACE_NAMES[v] for v in mapping.values()}
                     - {RACE_NAMES[mapping[c]] for c in raw_cols})
    if missing:
        raise ConfigurationError(f"{path}: no column for race(s) {missing}")
    n = len(frame)
    raw = np.zeros((n, len(raw_cols)))
    supp = np.zeros((n, len(raw_cols)), dtype=bool)
    for j, col in enumerate(raw_cols):
        values = frame[col].to_numpy(dtype=object)
        for i, text in enumerate(values):
            text = text.strip()
            if text.upper() == SUPPRESSED:
                supp[i, j] = True
            else:
                raw[i, j] = _to_number(text, path, i + 2, col)
    if supp.any():
        if fixed_total is not None:
            totals = np.full(n, float(fixed_total))
        elif total_col in frame.columns:
            totals = np.array([_to_number(t, path, i + 2, total_col)
                               for i, t in enumerate(frame[total_col])])
        else:
            rows = np.flatnonzero(supp.any(axis=1))
            raise DataError(f"{path}:{rows[0] + 2}: suppressed cells need a "
                            f"{total_col!r} column to redistribute")
        n_supp = supp.sum(axis=1)
        remaining = np.maximum(totals - raw.sum(axis=1), 0.0)
        share = np.divide(remaining, n_supp, out=np.zeros(n), where=n_supp > 0)
        raw = np.where(supp, share[:, None], raw)
    out = np.zeros((n, N_RACES))
    for j, col in enumerate(raw_cols):
        out[:, mapping[col]] += raw[:, j]
    return out


def _normalize_rows(mass, path, names):
    totals = mass.sum(axis=1)
    empty = np.flatnonzero(totals <= 0)
    if empty.size:
        raise DataError(f"{path}:{empty[0] + 2}: row {names[empty[0]]!r} has "
                        f"no mass in any race column")
    return mass / totals[:, None]


def _check_unique(names, path, what):
    seen = {}
    for i, name in enumerate(names):
        if name in seen:
            raise DataError(f"{path}:{i + 2}: {what} {name!r} duplicates line "
                            f"{seen[name] + 2}")
        seen[name] = i


def _lookup_rows(index, keys):
    """Row positions for ``keys`` in ``index`` (-1 where absent)."""
    return index.get_indexer(pd.Index(keys, dtype=object))


@dataclasses.dataclass(frozen=True, eq=False)
class SurnameTable:
    """P(race | surname) rows keyed by canonical surname, plus a residual row."""

    names: np.ndarray
    probs: np.ndarray
    residual: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_index", pd.Index(self.names, dtype=object))

    def __len__(self):
        return len(self.names)

    def lookup(self, surnames):
        """Rows for each surname; unmatched names get the residual row.

        Returns
        -------
        probs : (n, 5) ndarray
        matched : (n,) bool ndarray
        """
        pos = _lookup_rows(self._index, surnames)
        matched = pos >= 0
        if len(self.names) == 0:
            return np.broadcast_to(self.residual, (len(pos), N_RACES)).copy(), matched
        out = np.where(matched[:, None], self.probs[np.maximum(pos, 0)],
                       self.residual)
        return out, matched

    def row(self, surname):
        probs, _ = self.lookup([surname])
        return probs[0]

    def to_dict(self):
        return {"kind": "surname",
                "names": self.names.tolist(),
                "probs": self.probs.tolist(),
                "residual": self.residual.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(names=np.array(d["names"], dtype=object),
                   probs=np.array(d["probs"], dtype=float).reshape(-1, N_RACES),
                   residual=np.array(d["residual"], dtype=float))


def build_surname_table(path, delimiter=","):
    """Build P(race | surname) from a Census-style surname list.

    The file needs a ``name`` column and either per-race percentages
    (``pctwhite, pctblack, pcthispanic, pctapi|pctasian`` and
    ``pctother`` or ``pctaian`` + ``pct2prace``) or per-race counts
    (``white, black, hispanic, asian, other``). Cells marked ``(S)`` share
    the row's unaccounted mass equally; for count files that needs a
    ``count`` column holding the row total.

    The residual row used for unmatched surnames is the file's
    ``ALL OTHER NAMES`` entry if present, else the unweighted mean of all
    rows.
    """
    frame = _read_table(path, delimiter)
    if "name" not in frame.columns:
        raise ConfigurationError(f"{path}: surname file needs a 'name' column")
    pct = any(c in _PCT_COLUMNS for c in frame.columns)
    mapping = _PCT_COLUMNS if pct else _COUNT_COLUMNS
    mass = _race_matrix(frame, path, mapping, "count", 100.0 if pct else None)
    names = canonicalize_many(frame["name"].to_numpy(dtype=object))
    probs = _normalize_rows(mass, path, names)

    is_residual = np.isin(names, list(RESIDUAL_NAMES))
    keep = ~is_residual & (names != "")
    if (names == "").any():
        log.warning("%s: %d rows with empty canonical name ignored", path,
                    int((names == "").sum()))
    _check_unique(names[keep], path, "surname")
    if is_residual.any():
        residual = probs[np.flatnonzero(is_residual)[0]]
    elif keep.any():
        residual = probs[keep].mean(axis=0)
    else:
        raise DataError(f"{path}: surname file has no rows")
    residual = residual / residual.sum()
    return SurnameTable(names=names[keep], probs=probs[keep], residual=residual)


def surname_table_from_counts(names, counts):
    """:class:`SurnameTable` from per-race counts; the residual is the row mean."""
    names = canonicalize_many(names)
    counts = np.asarray(counts, dtype=float).reshape(-1, N_RACES)
    _check_unique(names, "<counts>", "surname")
    probs = _normalize_rows(counts, "<counts>", names)
    residual = probs.mean(axis=0)
    return SurnameTable(names=names, probs=probs, residual=residual / residual.sum())


@dataclasses.dataclass(frozen=True, eq=False)
class GeoTable:
    """P(block | race) over one reference region."""

    block_ids: np.ndarray
    probs: np.ndarray
    totals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_index", pd.Index(self.block_ids, dtype=object))

    def __len__(self):
        return len(self.block_ids)

    @property
    def tract_of(self):
        """Mapping block_id -> tract_id."""
        return {b: b[:11] for b in self.block_ids}

    def lookup(self, block_ids):
        """Rows for each block; unknown blocks get zeros.

        Returns
        -------
        probs : (n, 5) ndarray
        known : (n,) bool ndarray
        """
        pos = _lookup_rows(self._index, block_ids)
        known = pos >= 0
        if len(self.block_ids) == 0:
            return np.zeros((len(pos), N_RACES)), known
        out = np.where(known[:, None], self.probs[np.maximum(pos, 0)], 0.0)
        return out, known

    def row(self, block_id):
        probs, _ = self.lookup([block_id])
        return probs[0]

    def to_dict(self):
        return {"kind": "geo", "block_ids": self.block_ids.tolist(),
                "probs": self.probs.tolist(), "totals": self.totals.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(block_ids=np.array(d["block_ids"], dtype=object),
                   probs=np.array(d["probs"], dtype=float).reshape(-1, N_RACES),
                   totals=np.array(d["totals"], dtype=float))


def geo_table_from_counts(block_ids, counts):
    """P(block | race) = count(race, block) / total count of race."""
    counts = np.asarray(counts, dtype=float).reshape(-1, N_RACES)
    totals = counts.sum(axis=0)
    zero = totals <= 0
    if zero.any():
        warnings.warn("no population for race(s) "
                      f"{[RACE_NAMES[i] for i in np.flatnonzero(zero)]}; "
                      "their P(block|race) column is all zero", stacklevel=2)
    probs = np.divide(counts, totals, out=np.zeros_like(counts),
                      where=~zero[None, :])
    return GeoTable(block_ids=np.asarray(block_ids, dtype=object), probs=probs,
                    totals=totals)


def build_geo_table(path, delimiter=","):
    """Build P(block | race) from a block composition file.

    Columns: ``block_id`` (or ``geoid``) holding a 15-digit GEOID, and
    counts ``white, black, hispanic, asian, other``. Denominators are the
    per-race totals over the blocks in the file.
    """
    frame = _read_table(path, delimiter)
    id_col = next((c for c in ("block_id", "geoid", "geoid20", "geocode")
                   if c in frame.columns), None)
    if id_col is None:
        raise ConfigurationError(f"{path}: block file needs a block_id/geoid column")
    ids = np.array([s.strip() for s in frame[id_col]], dtype=object)
    bad = np.flatnonzero(~valid_block_ids(ids))
    if bad.size:
        raise DataError(f"{path}:{bad[0] + 2}: malformed GEOID {ids[bad[0]]!r}")
    _check_unique(ids, path, "block")
    counts = _race_matrix(frame, path, _COUNT_COLUMNS, "total", None)
    return geo_table_from_counts(ids, counts)


@dataclasses.dataclass(frozen=True, eq=False)
class NameTable:
    """P(name | race) for one name slot, with an out-of-vocabulary bucket."""

    names: np.ndarray
    probs: np.ndarray
    oov: np.ndarray
    slot: str
    floor: float
    training_states: tuple = ()
    held_out: str = None

    def __post_init__(self):
        object.__setattr__(self, "_index", pd.Index(self.names, dtype=object))

    def __len__(self):
        return len(self.names)

    def lookup(self, names):
        """Rows for each name; unseen or empty names get the OOV row.

        Returns
        -------
        probs : (n, 5) ndarray
        seen : (n,) bool ndarray
        """
        pos = _lookup_rows(self._index, names)
        seen = pos >= 0
        if len(self.names) == 0:
            return np.broadcast_to(self.oov, (len(pos), N_RACES)).copy(), seen
        out = np.where(seen[:, None], self.probs[np.maximum(pos, 0)], self.oov)
        return out, seen

    def row(self, name):
        probs, _ = self.lookup([name])
        return probs[0]

    def to_dict(self):
        return {"kind": "name", "slot": self.slot, "floor": self.floor,
                "training_states": list(self.training_states),
                "held_out": self.held_out,
                "names": self.names.tolist(), "probs": self.probs.tolist(),
                "oov": self.oov.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(names=np.array(d["names"], dtype=object),
                   probs=np.array(d["probs"], dtype=float).reshape(-1, N_RACES),
                   oov=np.array(d["oov"], dtype=float), slot=d["slot"],
                   floor=float(d["floor"]),
                   training_states=tuple(d["training_states"]),
                   held_out=d["held_out"])


def name_table_from_counts(names, counts, slot, floor=1.0, training_states=(),
                           held_out=None):
    """Smoothed P(name | race) from a (vocabulary x race) count matrix.

    ``P(name|r) = (count + floor) / (N_r + floor * V)`` with ``V`` the
    vocabulary size plus one out-of-vocabulary bucket, which receives
    ``floor / (N_r + floor * V)``.
    """
    if slot not in ("first", "middle"):
        raise ConfigurationError(f"name slot must be first|middle, got {slot!r}")
    if floor < 0:
        raise ConfigurationError("smoothing floor must be >= 0")
    counts = np.asarray(counts, dtype=float).reshape(-1, N_RACES)
    vocab = counts.shape[0] + 1
    denom = counts.sum(axis=0) + floor * vocab
    zero = denom <= 0
    if zero.any():
        warnings.warn(f"{slot} names: no mass for race(s) "
                      f"{[RACE_NAMES[i] for i in np.flatnonzero(zero)]}",
                      stacklevel=2)
    safe = np.where(zero, 1.0, denom)
    probs = np.where(zero, 0.0, (counts + floor) / safe)
    oov = np.where(zero, 0.0, floor / safe)
    return NameTable(names=np.asarray(names, dtype=object), probs=probs, oov=oov,
                     slot=slot, floor=float(floor),
                     training_states=tuple(training_states), held_out=held_out)


def build_name_table(training, slot, floor=1.0, held_out=None):
    """P(name | race) for ``slot`` from labelled training datasets.

    Parameters
    ----------
    training : sequence of Dataset
        Labelled records from the training states.
    slot : {"first", "middle"}
    floor : float
        Additive smoothing count (default 1).
    held_out : str, optional
        State excluded from training. Any training record from it raises
        :class:`LeakageError`.
    """
    if slot not in ("first", "middle"):
        raise ConfigurationError(f"name slot must be first|middle, got {slot!r}")
    training = list(training)
    states = sorted({s for d in training for s in d.state.tolist()})
    if held_out is not None and held_out in states:
        raise LeakageError(f"{slot}-name table: training data contains records "
                           f"from held-out state {held_out}")
    names, labels = [], []
    for d in training:
        if np.any(d.label < 0) or np.any(d.label >= N_RACES):
            raise DataError(f"{slot}-name table: every training record needs "
                            "one of the five race labels")
        col = d.first_name if slot == "first" else d.middle_name
        names.append(col)
        labels.append(d.label)
    names = np.concatenate(names) if names else np.zeros(0, dtype=object)
    labels = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int8)
    present = names != ""
    names, labels = names[present], labels[present].astype(np.intp)
    vocab, inverse = np.unique(names.astype(str), return_inverse=True)
    counts = np.zeros((len(vocab), N_RACES))
    np.add.at(counts, (inverse, labels), 1.0)
    return name_table_from_counts(vocab.astype(object), counts, slot, floor,
                                  training_states=states, held_out=held_out)


def build_name_table_from_file(path, slot, floor=0.0, delimiter=","):
    """P(name | race) from a name frequency file (``name`` + race counts)."""
    frame = _read_table(path, delimiter)
    if "name" not in frame.columns:
        raise ConfigurationError(f"{path}: name file needs a 'name' column")
    names = canonicalize_many(frame["name"].to_numpy(dtype=object))
    _check_unique(names, path, "name")
    counts = _race_matrix(frame, path, _COUNT_COLUMNS, "count", None)
    return name_table_from_counts(names, counts, slot, floor)


@dataclasses.dataclass(frozen=True, eq=False)
class TableSet:
    """The tables needed to score one region."""

    surnames: SurnameTable
    geo: GeoTable
    first: NameTable = None
    middle: NameTable = None

    @property
    def layout(self):
        return "extended" if self.first is not None and self.middle is not None else "base"

    def require(self, layout):
        n_features(layout)
        if layout == "extended" and self.layout != "extended":
            raise ConfigurationError("extended layout needs first- and middle-name tables")

    def with_geo(self, geo):
        return dataclasses.replace(self, geo=geo)


@dataclasses.dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout: str


def make_feature_matrix(dataset, tables, layout="base"):
    """Predictor matrix for every record of ``dataset``.

    Columns are ``P(block|r)`` for the five races, then ``P(r|surname)``,
    then (extended layout) ``P(first|r)`` and ``P(middle|r)``. Unknown
    blocks give zeros, unmatched surnames the residual row and missing or
    unseen first/middle names their table's OOV row.
    """
    tables.require(layout)
    geo, _ = tables.geo.lookup(dataset.block_id)
    sur, _ = tables.surnames.lookup(dataset.surname)
    blocks = [geo, sur]
    if layout == "extended":
        blocks.append(tables.first.lookup(dataset.first_name)[0])
        blocks.append(tables.middle.lookup(dataset.middle_name)[0])
    return np.hstack(blocks)


def make_features(person, tables, layout="base"):
    """Feature vector for a single :class:`~raceproxy.ingest.PersonRecord`."""
    tables.require(layout)
    parts = [tables.geo.row(person.block_id), tables.surnames.row(person.surname)]
    if layout == "extended":
        parts.append(tables.first.row(person.first_name))
        parts.append(tables.middle.row(person.middle_name))
    return FeatureVector(values=np.concatenate(parts), layout=layout)


# -- serialization -----------------------------------------------------------

def dump_json(obj, path):
    """Deterministic JSON write; returns the sha256 of the bytes written."""
    data = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def _wrap(table, layout):
    return {"format": "raceproxy-table", "version": FORMAT_VERSION,
            "layout": layout, "table": table.to_dict()}


def save_table(table, path, layout="base"):
    return dump_json(_wrap(table, layout), path)


def load_table(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "raceproxy-table":
        raise DataError(f"{path}: not a table file")
    if doc.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported table version {doc.get('version')}")
    kind = doc["table"]["kind"]
    cls = {"surname": SurnameTable, "geo": GeoTable, "name": NameTable}[kind]
    return cls.from_dict(doc["table"])


TABLE_FILES = {"surnames": "surnames.json", "geo": "geo.json",
               "first": "first_names.json", "middle": "middle_names.json"}


def save_tableset(tables, directory):
    """Write each table plus nothing else; returns {file name: sha256}."""
    os.makedirs(directory, exist_ok=True)
    sums = {}
    for attr, fname in TABLE_FILES.items():
        table = getattr(tables, attr)
        if table is not None:
            sums[fname] = save_table(table, os.path.join(directory, fname),
                                     tables.layout)
    return sums


def load_tableset(directory):
    parts = {}
    for attr, fname in TABLE_FILES.items():
        path = os.path.join(directory, fname)
        if os.path.exists(path):
            parts[attr] = load_table(path)
        elif attr in ("surnames", "geo"):
            raise ConfigurationError(f"table directory {directory} lacks {fname}")
    return TableSet(**parts)
