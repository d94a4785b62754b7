"""Streaming batch scoring of person files.

Each output row is the input line echoed byte for byte, followed by the
columns ``p_white, p_black, p_hispanic, p_asian, p_other, pred_race,
fallback``. Probabilities are written in fixed-point notation with
``DIGITS`` decimals, so files are byte-identical across runs, platforms
and thread counts.
"""

import collections
import concurrent.futures
import dataclasses
import functools
import io
import logging
import time

import numpy as np
import pandas as pd

from .bisg import METHODS, PREDICTION_COLUMNS, BatchReport, Fallback, posterior_matrix
from .categories import N_RACES, RACE_NAMES
from .errors import ConfigurationError, DataError
from .ingest import _frame_to_dataset, _read_frame, _resolve_schema
from .tables import make_feature_matrix

log = logging.getLogger(__name__)

DIGITS = 12
CHUNK_BYTES = 1 << 23

_N_FLAGS = int(Fallback.ALL) + 1


@functools.lru_cache(maxsize=None)
def _tails(delimiter):
    # "<d><race><d><flags>\n" for every (argmax, flag word) pair
    return np.array([f"{delimiter}{name}{delimiter}{flag}\n".encode()
                     for name in RACE_NAMES for flag in range(_N_FLAGS)])


def format_probabilities(probs, digits=DIGITS, delimiter=","):
    """Fixed-point text of each row as one bytes value, ``",p0,p1,...,p4"``."""
    probs = np.asarray(probs, dtype=float)
    n, k = probs.shape
    if n and (probs.min() < 0 or probs.max() > 1):
        raise DataError("probabilities outside [0, 1]")
    q = np.rint(probs * 10.0 ** digits).astype(np.int64)
    width = digits + 3
    buf = np.empty((n, k, width), dtype=np.uint8)
    buf[:, :, 0] = ord(delimiter)
    buf[:, :, 2] = ord(".")
    whole = q // 10 ** digits
    buf[:, :, 1] = ord("0") + whole
    frac = q - whole * 10 ** digits
    for pos in range(width - 1, 2, -1):
        frac, d = np.divmod(frac, 10)
        buf[:, :, pos] = ord("0") + d
    return buf.reshape(n, k * width).view(f"S{k * width}").ravel()


def format_rows(probs, flags, delimiter=","):
    """Output suffix (newline included) for each scored row."""
    probs = np.asarray(probs)
    flags = np.asarray(flags, dtype=np.int64)
    tail = _tails(delimiter)[probs.argmax(axis=1) * _N_FLAGS + flags]
    return np.strings.add(format_probabilities(probs, delimiter=delimiter), tail)


def lookup_flags(dataset, tables, layout):
    """Fallback bits of the table lookups behind a feature matrix."""
    _, matched = tables.surnames.lookup(dataset.surname)
    geo, known = tables.geo.lookup(dataset.block_id)
    known = known & (geo.sum(axis=1) > 0)
    flags = np.where(matched, 0, int(Fallback.SURNAME_RESIDUAL))
    flags |= np.where(known, 0, int(Fallback.GEO_MISSING))
    if layout == "extended":
        for table, col, bit in ((tables.first, dataset.first_name, Fallback.FIRST_OOV),
                                (tables.middle, dataset.middle_name, Fallback.MIDDLE_OOV)):
            _, seen = table.lookup(col)
            flags |= np.where((col != "") & ~seen, int(bit), 0)
    return flags.astype(np.int64)


@dataclasses.dataclass(frozen=True, eq=False)
class Scorer:
    """Posterior source: ``"bisg"``, ``"extended"`` or a trained model.

    Parameters
    ----------
    method : str or model
        A model is anything with ``predict_proba`` and a ``layout``.
    tables : TableSet
    layout : str, optional
        Feature layout for models; defaults to the model's own.
    """

    method: object
    tables: object
    layout: str = None

    def __post_init__(self):
        if isinstance(self.method, str):
            if self.method not in METHODS:
                raise ConfigurationError(f"unknown method {self.method!r}; use "
                                         f"{'|'.join(METHODS)} or a model file")
            self.tables.require("extended" if self.method == "extended" else "base")
            return
        layout = self.layout or self.method.layout or "base"
        if self.method.layout is not None and self.method.layout != layout:
            raise ConfigurationError(f"model layout {self.method.layout!r} does not "
                                     f"match requested layout {layout!r}")
        self.tables.require(layout)
        object.__setattr__(self, "layout", layout)

    @property
    def name(self):
        if isinstance(self.method, str):
            return self.method
        return getattr(self.method, "family", "model")

    def score(self, dataset):
        """``(probs (n, 5), flags (n,))`` for one dataset."""
        if isinstance(self.method, str):
            return posterior_matrix(dataset, self.tables, self.method)
        X = make_feature_matrix(dataset, self.tables, self.layout)
        probs = self.method.predict_proba(X) if len(X) else np.empty((0, N_RACES))
        return probs, lookup_flags(dataset, self.tables, self.layout)


@dataclasses.dataclass
class PredictSummary:
    n_in: int = 0
    n_out: int = 0
    malformed: int = 0
    seconds: float = 0.0
    report: BatchReport = dataclasses.field(default_factory=BatchReport)

    @property
    def rows_per_second(self):
        return self.n_in / self.seconds if self.seconds > 0 else float("inf")

    def text(self):
        return (f"scored {self.n_out} of {self.n_in} rows ({self.malformed} malformed) "
                f"in {self.seconds:.2f} s, {self.rows_per_second:,.0f} rows/s\n"
                f"{self.report.summary()}")


def _line_chunks(fh, chunk_bytes):
    """Non-blank lines of ``fh`` (bytes, line ending removed) in groups.

    Each group holds whole lines totalling roughly ``chunk_bytes``.
    """
    while True:
        block = fh.read(chunk_bytes)
        if not block:
            return
        if not block.endswith(b"\n"):
            block += fh.readline()
        lines = block.split(b"\n")
        if b"\r" in block:
            lines = [line.rstrip(b"\r") for line in lines]
        lines = [line for line in lines if line]
        if lines:
            yield lines


def _score_chunk(lines, header, cols, delimiter, first_line, scorer):
    frame = _read_frame(io.BytesIO(b"\n".join(lines)), delimiter, header=None,
                        names=header)
    if len(frame) != len(lines):
        raise DataError(f"lines {first_line}-{first_line + len(lines) - 1}: "
                        f"{len(frame)} records parsed from {len(lines)} lines; "
                        "quoted fields may not span lines")
    ds = _frame_to_dataset(frame, cols, first_line)
    keep = np.ones(len(lines), dtype=bool)
    for m in ds.malformed:
        keep[m.line - first_line] = False
    probs, flags = scorer.score(ds)
    suffix = format_rows(probs, flags, delimiter).tolist()
    kept = [line for line, k in zip(lines, keep) if k] if len(ds.malformed) else lines
    out = [None] * (2 * len(kept))
    out[0::2] = kept
    out[1::2] = suffix
    return b"".join(out), ds.malformed, BatchReport.from_flags(flags)


def predict_file(in_path, out_path, scorer, schema=None, delimiter=",",
                 chunk_bytes=CHUNK_BYTES, threads=1):
    """Score ``in_path`` into ``out_path`` chunk by chunk.

    Memory is bounded by ``chunk_bytes`` times the number of chunks in
    flight (``2 * threads``). Chunks are written in input order, so the
    output does not depend on ``threads``. Malformed rows are logged
    and left out.

    Returns
    -------
    PredictSummary
    """
    if len(delimiter) != 1 or delimiter in "\r\n.0123456789" or ord(delimiter) > 127:
        raise ConfigurationError(f"unusable delimiter {delimiter!r}")
    if chunk_bytes < 1 or threads < 1:
        raise ConfigurationError("chunk_bytes and threads must be positive")
    start = time.perf_counter()
    summary = PredictSummary()
    with open(in_path, "rb") as fh, open(out_path, "wb") as out:
        first = fh.readline()
        if not first.strip():
            raise DataError(f"{in_path}: file has no header row")
        header_line = first.rstrip(b"\r\n")
        header = list(pd.read_csv(io.BytesIO(header_line), sep=delimiter, dtype=str,
                                  nrows=0).columns)
        cols = _resolve_schema(header, schema)
        clash = set(PREDICTION_COLUMNS) & set(header)
        if clash:
            raise ConfigurationError(f"input already has output column(s) {sorted(clash)}")
        extra = "".join(delimiter + c for c in PREDICTION_COLUMNS)
        out.write(header_line + extra.encode() + b"\n")

        def jobs():
            line = 2
            for lines in _line_chunks(fh, chunk_bytes):
                yield lines, line
                line += len(lines)

        def emit(result, n):
            data, malformed, report = result
            out.write(data)
            summary.n_in += n
            summary.n_out += n - len(malformed)
            summary.malformed += len(malformed)
            summary.report = summary.report.merge(report)
            for m in malformed:
                log.warning("%s:%d: %s", in_path, m.line, m.reason)

        if threads == 1:
            for lines, line in jobs():
                emit(_score_chunk(lines, header, cols, delimiter, line, scorer), len(lines))
        else:
            with concurrent.futures.ThreadPoolExecutor(threads) as pool:
                pending = collections.deque()
                for lines, line in jobs():
                    pending.append((pool.submit(_score_chunk, lines, header, cols,
                                                delimiter, line, scorer), len(lines)))
                    if len(pending) >= 2 * threads:
                        fut, n = pending.popleft()
                        emit(fut.result(), n)
                while pending:
                    fut, n = pending.popleft()
                    emit(fut.result(), n)
    summary.seconds = time.perf_counter() - start
    if summary.report.n == 0:
        summary.report = BatchReport.from_flags(np.empty(0, dtype=np.int64))
    return summary

