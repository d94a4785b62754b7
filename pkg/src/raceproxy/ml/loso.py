"""Leave-one-state-out training and prediction."""

import dataclasses
import logging

import numpy as np

from ..errors import ConfigurationError, LeakageError
from ..ingest import Dataset
from ..tables import TableSet, build_name_table, make_feature_matrix, n_features
from .models import check_family, fit_model
from .tuning import TuneSpec, tune

log = logging.getLogger(__name__)

TUNE_SIZE = 100_000
TRAIN_SIZE = 1_000_000


@dataclasses.dataclass
class LosoFold:
    held_out: str
    model: object
    probs: np.ndarray
    tables: TableSet
    manifest: dict
    tune_table: list = None


def check_no_leakage(training, held_out_code, held_out=None):
    """Raise :class:`LeakageError` if held-out records reach ``training``.

    Checks the state code of every training record and, when the
    held-out dataset is given, record-id overlap.
    """
    for ds in training:
        if np.any(ds.state == held_out_code):
            raise LeakageError(f"training input contains records from held-out "
                               f"state {held_out_code}")
    if held_out is not None and len(held_out):
        held_ids = set(held_out.record_id.tolist())
        for ds in training:
            shared = held_ids.intersection(ds.record_id.tolist())
            if shared:
                example = sorted(shared)[0]
                raise LeakageError(f"{len(shared)} held-out record id(s) "
                                   f"(e.g. {example}) appear in training input")


def _fold_seed(seed, i):
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def training_matrix(datasets, surnames, geo, name_tables, layout):
    """Stack features of several states, each with its own block table."""
    first, middle = name_tables
    X, y = [], []
    for ds in datasets:
        codes = np.unique(ds.state.astype(str))
        for code in codes:
            part = ds.take(ds.state == code) if len(codes) > 1 else ds
            tables = TableSet(surnames, geo[code], first, middle)
            X.append(make_feature_matrix(part, tables, layout))
            y.append(part.label.astype(np.intp))
    return np.vstack(X), np.concatenate(y)


def run_fold(datasets, held_out, surnames, geo, family, layout="base",
             spec=None, tune_size=TUNE_SIZE, train_size=TRAIN_SIZE, floor=1.0,
             seed=0, params=None):
    """Train on every state but ``held_out`` and predict ``held_out``.

    Parameters
    ----------
    datasets : dict
        State code -> labelled Dataset.
    surnames : SurnameTable
    geo : dict
        State code -> GeoTable for that state's blocks.
    params : dict, optional
        Fixed hyperparameters; skips tuning.
    """
    check_family(family)
    n_features(layout)
    if held_out not in datasets:
        raise ConfigurationError(f"held-out state {held_out} has no dataset")
    train_codes = sorted(c for c in datasets if c != held_out)
    training = [datasets[c] for c in train_codes]
    target = datasets[held_out]
    check_no_leakage(training, held_out, target)
    for code in train_codes:
        stray = set(datasets[code].state.tolist()) - {code}
        if stray:
            raise ConfigurationError(f"dataset for {code} holds records of {sorted(stray)}")

    first = middle = None
    if layout == "extended":
        first = build_name_table(training, "first", floor, held_out=held_out)
        middle = build_name_table(training, "middle", floor, held_out=held_out)
    rng = np.random.default_rng(seed)
    pooled = Dataset.concat(training)
    train_rows = pooled.sample(train_size, rng)
    tune_rows = pooled.sample(tune_size, rng)
    check_no_leakage([train_rows, tune_rows], held_out, target)

    table = None
    spec = spec or TuneSpec(seed=seed)
    if params is None:
        if spec.box(family):
            Xt, yt = training_matrix([tune_rows], surnames, geo, (first, middle), layout)
            result = tune(dataclasses.replace(spec, tune_size=tune_size), family,
                          Xt, yt, layout=layout)
            params, table = result.best, result.table
        else:
            params = {}
    X, y = training_matrix([train_rows], surnames, geo, (first, middle), layout)
    model = fit_model(family, X, y, params, seed=seed, layout=layout)

    tables = TableSet(surnames, geo[held_out], first, middle)
    probs = model.predict_proba(make_feature_matrix(target, tables, layout))
    manifest = {"held_out": held_out, "training_states": train_codes,
                "family": family, "layout": layout, "seed": seed,
                "n_train": int(len(y)), "n_tune": int(len(tune_rows)),
                "n_predicted": int(len(target)), "params": dict(model.params)}
    return LosoFold(held_out, model, probs, tables, manifest, table)


def run_loso(datasets, surnames, geo, family, layout="base", spec=None,
             tune_size=TUNE_SIZE, train_size=TRAIN_SIZE, scale=1.0, floor=1.0,
             seed=0, params=None, states=None):
    """One :class:`LosoFold` per held-out state.

    ``scale`` multiplies both sample sizes (e.g. 0.01 for desk runs).
    """
    if len(datasets) < 2:
        raise ConfigurationError("leave-one-state-out needs at least two states")
    codes = sorted(datasets)
    folds = []
    for i, code in enumerate(codes):
        if states is not None and code not in states:
            continue
        log.info("fold %s: family=%s layout=%s", code, family, layout)
        folds.append(run_fold(
            datasets, code, surnames, geo, family, layout, spec,
            tune_size=max(1, int(round(tune_size * scale))),
            train_size=max(1, int(round(train_size * scale))),
            floor=floor, seed=_fold_seed(seed, i), params=params))
    return folds
