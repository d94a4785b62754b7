"""Command-line front end: ``raceproxy <subcommand> [--config FILE] [flags]``.

Configuration is a flat text file of ``section.key = value`` lines (``#``
starts a comment). Command-line flags override the file, and every run
writes the fully resolved configuration to ``config.cfg`` in its output
directory. Outputs are staged in a temporary sibling directory and moved
into place only when the subcommand succeeds.

Exit codes: 0 success, 2 configuration, 3 data, 4 leakage, 5 divergence,
6 unreadable input.
"""

import argparse
import contextlib
import dataclasses
import hashlib
import logging
import os
import re
import resource
import shutil
import sys
import tempfile

import numpy as np
import pandas as pd

from . import synth
from .bisg import METHODS, posterior_matrix
from .categories import RACE_NAMES
from .errors import ConfigurationError, DataError, LeakageError, RaceProxyError
from .ingest import Dataset, filter_for_analysis, parse_person_file
from .metrics import full_report
from .ml.loso import TRAIN_SIZE, TUNE_SIZE, check_no_leakage, run_fold, training_matrix
from .ml.models import DEFAULT_RANGES, FAMILIES, check_family, fit_model, load_model, save_model
from .ml.tuning import TuneSpec, tune
from .predict import CHUNK_BYTES, Scorer, predict_file
from .tables import (TableSet, build_geo_table, build_name_table,
                     build_name_table_from_file, build_surname_table, dump_json,
                     load_tableset, save_tableset)

log = logging.getLogger("raceproxy")

IO_EXIT = 6

# key -> (kind, default); kinds: str, int, float, bool, list
KEYS = {
    "run.out": ("str", ""),
    "run.seed": ("int", 0),
    "run.scale": ("float", 1.0),
    "run.layout": ("str", "base"),
    "run.method": ("str", "bisg"),
    "run.agg": ("str", "prob"),
    "run.threads": ("int", 1),
    "run.delimiter": ("str", ","),
    "data.input": ("str", ""),
    "data.persons": ("list", []),
    "tables.dir": ("str", ""),
    "tables.surnames": ("str", ""),
    "tables.blocks": ("str", ""),
    "tables.first": ("str", ""),
    "tables.middle": ("str", ""),
    "tables.floor": ("float", 1.0),
    "tables.held_out": ("str", ""),
    "model.family": ("str", "mlr"),
    "model.path": ("str", ""),
    "tune.points": ("int", 10),
    "tune.folds": ("int", 5),
    "tune.size": ("int", TUNE_SIZE),
    "tune.train_size": ("int", TRAIN_SIZE),
    "predict.chunk_bytes": ("int", CHUNK_BYTES),
    "predict.memory_mb": ("float", 0.0),
    "eval.methods": ("list", ["bisg"]),
    "loso.families": ("list", list(FAMILIES)),
    "loso.layouts": ("list", ["base", "extended"]),
    "loso.tune": ("bool", True),
    "synth.spec": ("str", "default"),
    "synth.records": ("int", 20_000),
    "synth.violation": ("list", ["0"]),
}

# keys with a free final component
PATTERNS = (
    (re.compile(r"data\.persons\.[A-Z]{2}"), "str"),
    (re.compile(r"tables\.blocks\.[A-Z]{2}"), "str"),
    (re.compile(r"columns\.(record_id|surname|block_id|state|first_name|middle_name|race)"),
     "str"),
    (re.compile(r"params\.(mlr|elnet|rf|gbm)\.[a-z_]+"), "number"),
    (re.compile(r"tune\.range\.[a-z]+\.[a-z_]+"), "range"),
)

CHOICES = {"run.layout": ("base", "extended"), "run.agg": ("prob", "argmax"),
           "synth.spec": ("default", "micro")}


def _kind(key):
    if key in KEYS:
        return KEYS[key][0]
    for pattern, kind in PATTERNS:
        if pattern.fullmatch(key):
            return kind
    raise ConfigurationError(f"unknown configuration key {key!r}")


def _convert(key, text):
    kind = _kind(key)
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "number":
            if text.lower() == "none":
                return None
            return int(text) if re.fullmatch(r"[+-]?\d+", text) else float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: expected {kind}, got {text!r}") from None
    if kind == "bool":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"{key}: expected true/false, got {text!r}")
    if kind == "list":
        return [v.strip() for v in text.split(",") if v.strip()]
    if kind == "range":
        parts = [v.strip() for v in text.split(",")]
        if len(parts) != 3:
            raise ConfigurationError(f"{key}: expected 'low, high, scale'")
        try:
            return (float(parts[0]), float(parts[1]), parts[2])
        except ValueError:
            raise ConfigurationError(f"{key}: bad range {text!r}") from None
    return text


def _render(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(value)
    if isinstance(value, tuple):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


@dataclasses.dataclass
class RunConfig:
    """Resolved key-value configuration; ``explicit`` holds keys set by the user."""

    values: dict
    explicit: set

    @classmethod
    def parse(cls, text, source="<config>"):
        values, explicit, section = {}, set(), ""
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                continue
            if "=" not in line:
                raise ConfigurationError(f"{source}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if section:
                key = f"{section}.{key}"
            if key in explicit:
                raise ConfigurationError(f"{source}:{n}: duplicate key {key!r}")
            values[key] = _convert(key, value)
            explicit.add(key)
        return cls.with_defaults(values, explicit)

    @classmethod
    def with_defaults(cls, values, explicit=()):
        full = {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in KEYS.items()}
        full.update(values)
        cfg = cls(full, set(explicit))
        cfg.validate()
        return cfg

    def set(self, key, value):
        self.values[key] = _convert(key, value) if isinstance(value, str) else value
        self.explicit.add(key)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def prefixed(self, prefix):
        """``{suffix: value}`` for every key starting with ``prefix``."""
        return {k[len(prefix):]: v for k, v in sorted(self.values.items())
                if k.startswith(prefix)}

    def validate(self):
        for key, allowed in CHOICES.items():
            if self.values[key] not in allowed:
                raise ConfigurationError(f"{key} must be one of {'|'.join(allowed)}")
        if self.values["run.scale"] <= 0:
            raise ConfigurationError("run.scale must be positive")
        if self.values["run.threads"] < 1:
            raise ConfigurationError("run.threads must be >= 1")

    def dump(self):
        return "".join(f"{k} = {_render(v)}\n" for k, v in sorted(self.values.items()))


# -- helpers -----------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _require(cfg, key):
    if not cfg[key]:
        raise ConfigurationError(f"missing required setting {key}")
    return cfg[key]


def _input(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"input file not found: {path}")
    return path


def _inputs_record(paths):
    return [{"path": p, "sha256": _sha256(p)} for p in paths]


@contextlib.contextmanager
def staged_output(out):
    """Yield a scratch directory that becomes ``out`` only on success."""
    if not out:
        raise ConfigurationError("missing required setting run.out (--out)")
    out = os.path.abspath(out)
    if os.path.exists(out) and (not os.path.isdir(out) or os.listdir(out)):
        raise ConfigurationError(f"output directory {out} already exists and is not empty")
    parent = os.path.dirname(out)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=os.path.basename(out) + ".partial-", dir=parent)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if os.path.isdir(out):
        os.rmdir(out)
    os.rename(tmp, out)


def _write_text(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_frame(frame, path):
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.12g")


def _schema(cfg):
    return cfg.prefixed("columns.")


def _read_persons(cfg, path):
    ds = parse_person_file(_input(path), _schema(cfg), cfg["run.delimiter"])
    kept, report = filter_for_analysis(ds, require_label=True)
    log.info("%s: %s", path, report.summary())
    if not len(kept):
        raise DataError(f"{path}: no labelled records left after filtering")
    return kept


def _person_paths(cfg):
    by_state = cfg.prefixed("data.persons.")
    return by_state, list(cfg["data.persons"])


def load_states(cfg):
    """Labelled datasets keyed by state, plus the list of files read.

    ``data.persons.XX`` assigns a whole file to state ``XX`` as is (so a
    file holding other states' rows is caught by the leakage checks);
    files listed in ``data.persons`` are pooled and split on the state
    column.
    """
    by_state, pooled = _person_paths(cfg)
    if not by_state and not pooled:
        raise ConfigurationError("no person files: set data.persons or data.persons.XX")
    states = {code: _read_persons(cfg, path) for code, path in by_state.items()}
    if pooled:
        data = Dataset.concat([_read_persons(cfg, p) for p in pooled])
        for code in sorted(set(data.state.tolist())):
            part = data.take(data.state == code)
            states[code] = Dataset.concat([states[code], part]) if code in states else part
    return dict(sorted(states.items())), sorted(by_state.values()) + pooled


def _surname_table(cfg):
    return build_surname_table(_input(_require(cfg, "tables.surnames")), cfg["run.delimiter"])


def geo_tables(cfg, codes):
    """Block table per state from ``tables.blocks.XX`` (or one shared file)."""
    per_state = cfg.prefixed("tables.blocks.")
    shared = cfg["tables.blocks"]
    out = {}
    for code in codes:
        path = per_state.get(code, shared)
        if not path:
            raise ConfigurationError(f"no block table for state {code}: "
                                     f"set tables.blocks.{code}")
        out[code] = build_geo_table(_input(path), cfg["run.delimiter"])
    return out


def _name_tables_from_files(cfg):
    first, middle = cfg["tables.first"], cfg["tables.middle"]
    if bool(first) != bool(middle):
        raise ConfigurationError("set both tables.first and tables.middle, or neither")
    if not first:
        return None, None
    floor = cfg["tables.floor"] if "tables.floor" in cfg.explicit else 0.0
    return (build_name_table_from_file(_input(first), "first", floor, cfg["run.delimiter"]),
            build_name_table_from_file(_input(middle), "middle", floor, cfg["run.delimiter"]))


def _name_tables_from_persons(cfg, datasets, held_out):
    training = list(datasets.values())
    floor = cfg["tables.floor"]
    return (build_name_table(training, "first", floor, held_out=held_out),
            build_name_table(training, "middle", floor, held_out=held_out))


def load_tables(cfg):
    """Table set for scoring one region: a built table directory or raw files."""
    if cfg["tables.dir"]:
        return load_tableset(cfg["tables.dir"])
    surnames = _surname_table(cfg)
    geo = build_geo_table(_input(_require(cfg, "tables.blocks")), cfg["run.delimiter"])
    first, middle = _name_tables_from_files(cfg)
    return TableSet(surnames, geo, first, middle)


def _tune_spec(cfg):
    ranges = {f: dict(b) for f, b in DEFAULT_RANGES.items()}
    for key, value in cfg.prefixed("tune.range.").items():
        family, param = key.split(".")
        check_family(family)
        if param not in DEFAULT_RANGES[family]:
            raise ConfigurationError(f"tune.range.{key}: {family} has no "
                                     f"hyperparameter {param!r}")
        lo, hi, scale = value
        ranges[family][param] = (int(lo), int(hi), scale) if scale == "int" else value
    return TuneSpec(ranges=ranges, n_points=cfg["tune.points"], folds=cfg["tune.folds"],
                    tune_size=_scaled(cfg, "tune.size"), seed=cfg["run.seed"])


def _scaled(cfg, key):
    return max(1, int(round(cfg[key] * cfg["run.scale"])))


def _peak_mb():
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


# -- subcommands -----------------------------------------------------------------

def cmd_synth(cfg, out):
    """Write a synthetic corpus (one per ``synth.violation`` value)."""
    make = synth.micro_spec if cfg["synth.spec"] == "micro" else synth.default_spec
    levels = []
    for text in cfg["synth.violation"]:
        try:
            levels.append(float(text))
        except ValueError:
            raise ConfigurationError(f"synth.violation: bad value {text!r}") from None
    manifest = {"seed": cfg["run.seed"], "spec": cfg["synth.spec"], "corpora": {}}
    for level in levels:
        if cfg["synth.spec"] == "micro":
            spec = make(seed=cfg["run.seed"], violation=level)
        else:
            spec = make(seed=cfg["run.seed"], n_records=cfg["synth.records"],
                        violation=level)
        sub = out if len(levels) == 1 else os.path.join(out, f"violation_{level:g}")
        paths = synth.generate(spec).write(sub)
        manifest["corpora"][f"{level:g}"] = {
            name: {"path": os.path.relpath(p, out), "sha256": _sha256(p)}
            for name, p in sorted(paths.items())}
        print(f"violation {level:g}: wrote {len(paths)} files")
    return manifest


def cmd_build_tables(cfg, out):
    """Surname, block and (extended layout) name tables plus a manifest."""
    inputs = [_input(_require(cfg, "tables.surnames")),
              _input(_require(cfg, "tables.blocks"))]
    surnames = _surname_table(cfg)
    geo = build_geo_table(inputs[1], cfg["run.delimiter"])
    first, middle = _name_tables_from_files(cfg)
    held_out = cfg["tables.held_out"] or None
    training_states = []
    if cfg["run.layout"] == "extended" and first is None:
        datasets, paths = load_states(cfg)
        inputs += paths
        if held_out is not None:
            check_no_leakage(datasets.values(), held_out)
        first, middle = _name_tables_from_persons(cfg, datasets, held_out)
        training_states = list(first.training_states)
    elif first is not None:
        inputs += [cfg["tables.first"], cfg["tables.middle"]]
    tables = TableSet(surnames, geo, first, middle)
    if cfg["run.layout"] == "base":
        tables = TableSet(surnames, geo)
    sums = save_tableset(tables, out)
    manifest = {"layout": tables.layout, "held_out": held_out,
                "training_states": training_states, "inputs": _inputs_record(inputs),
                "tables": sums}
    print(f"built {len(sums)} tables ({tables.layout} layout): "
          f"{len(surnames)} surnames, {len(geo)} blocks")
    return manifest


def _scorer(cfg, tables):
    if cfg["model.path"]:
        model, meta = load_model(_input(cfg["model.path"]))
        if "run.layout" in cfg.explicit and cfg["run.layout"] != model.layout:
            raise ConfigurationError(f"model layout {model.layout!r} does not match "
                                     f"run.layout {cfg['run.layout']!r}")
        return Scorer(model, tables, model.layout)
    if cfg["run.method"] not in METHODS:
        raise ConfigurationError(f"run.method must be {'|'.join(METHODS)} "
                                 "unless model.path is set")
    return Scorer(cfg["run.method"], tables)


def cmd_predict(cfg, out):
    """Stream a person file through BISG, extended BISG or a model file."""
    src = _input(_require(cfg, "data.input"))
    tables = load_tables(cfg)
    scorer = _scorer(cfg, tables)
    summary = predict_file(src, os.path.join(out, "predictions.csv"), scorer,
                           schema=_schema(cfg), delimiter=cfg["run.delimiter"],
                           chunk_bytes=cfg["predict.chunk_bytes"],
                           threads=cfg["run.threads"])
    peak = _peak_mb()
    print(summary.text())
    print(f"peak memory {peak:.0f} MB")
    bound = cfg["predict.memory_mb"]
    if bound and peak > bound:
        raise DataError(f"peak memory {peak:.0f} MB exceeded predict.memory_mb = {bound:g}")
    return {"method": scorer.name, "rows_in": summary.n_in, "rows_out": summary.n_out,
            "malformed": summary.malformed, "fallbacks": summary.report.counts}


def _training_data(cfg):
    datasets, paths = load_states(cfg)
    held_out = cfg["tables.held_out"] or None
    if held_out is not None:
        if held_out in datasets:
            raise LeakageError(f"held-out state {held_out} is among the training inputs")
        check_no_leakage(datasets.values(), held_out)
    codes = sorted(datasets)
    surnames = _surname_table(cfg)
    geo = geo_tables(cfg, codes)
    first = middle = None
    if cfg["run.layout"] == "extended":
        first, middle = _name_tables_from_files(cfg)
        if first is None:
            first, middle = _name_tables_from_persons(cfg, datasets, held_out)
    pooled = Dataset.concat(datasets.values())
    return pooled, surnames, geo, (first, middle), paths, codes


def cmd_train(cfg, out):
    """Fit one model family on labelled person files."""
    family = cfg["model.family"]
    check_family(family)
    pooled, surnames, geo, names, paths, codes = _training_data(cfg)
    rng = np.random.default_rng(cfg["run.seed"])
    rows = pooled.sample(_scaled(cfg, "tune.train_size"), rng)
    X, y = training_matrix([rows], surnames, geo, names, cfg["run.layout"])
    model = fit_model(family, X, y, cfg.prefixed(f"params.{family}."), seed=cfg["run.seed"],
                      layout=cfg["run.layout"])
    manifest = {"training_states": codes, "held_out": cfg["tables.held_out"] or None,
                "n_train": int(len(y)), "inputs": _inputs_record(paths)}
    digest = save_model(model, os.path.join(out, "model.json"), seed=cfg["run.seed"],
                        manifest=manifest)
    if names[0] is not None:
        save_tableset(TableSet(surnames, geo[codes[0]], *names),
                      os.path.join(out, "tables"))
    print(f"trained {family} on {len(y)} records from {', '.join(codes)}")
    return {**manifest, "model_sha256": digest}


def cmd_tune(cfg, out):
    """Latin hypercube search; writes the CV table and the best point."""
    family = cfg["model.family"]
    pooled, surnames, geo, names, paths, codes = _training_data(cfg)
    spec = _tune_spec(cfg)
    rows = pooled.sample(spec.tune_size, np.random.default_rng(cfg["run.seed"]))
    X, y = training_matrix([rows], surnames, geo, names, cfg["run.layout"])
    result = tune(spec, family, X, y, layout=cfg["run.layout"])
    result.write_csv(os.path.join(out, "tune.csv"))
    best = "".join(f"params.{family}.{k} = {_render(v)}\n"
                   for k, v in sorted(result.best.items()))
    _write_text(os.path.join(out, "best_params.cfg"), best)
    print(f"best {family} point: {result.best}")
    return {"training_states": codes, "n_tune": int(len(y)), "best": result.best,
            "inputs": _inputs_record(paths)}


def _write_report(report, out, prefix=""):
    _write_frame(report.long_table(), os.path.join(out, prefix + "metrics.csv"))
    _write_frame(report.calibration_table(), os.path.join(out, prefix + "calibration.csv"))
    _write_text(os.path.join(out, prefix + "report.txt"), report.text())


def cmd_evaluate(cfg, out):
    """Metrics of several methods on one labelled person file."""
    ds = _read_persons(cfg, _require(cfg, "data.input"))
    tables = load_tables(cfg)
    posteriors = {}
    for method in cfg["eval.methods"]:
        if method in METHODS:
            posteriors[method] = posterior_matrix(ds, tables, method)[0]
        else:
            model, _ = load_model(_input(method))
            scorer = Scorer(model, tables, model.layout)
            name = f"{model.family}:{os.path.basename(method)}"
            posteriors[name] = scorer.score(ds)[0]
    state = ",".join(sorted(set(ds.state.tolist())))
    report = full_report(ds, posteriors, state=state, layout=tables.layout,
                         agg=cfg["run.agg"])
    _write_report(report, out)
    print(report.text(), end="")
    return {"methods": list(posteriors), "n": len(ds), "state": state}


def cmd_loso(cfg, out):
    """Leave-one-state-out comparison of Bayesian and supervised methods."""
    datasets, paths = load_states(cfg)
    if len(datasets) < 2:
        raise ConfigurationError(f"leave-one-state-out needs at least two states, "
                                 f"got {sorted(datasets)}")
    codes = sorted(datasets)
    surnames = _surname_table(cfg)
    geo = geo_tables(cfg, codes)
    families = cfg["loso.families"]
    for f in families:
        check_family(f)
    layouts = cfg["loso.layouts"]
    for layout in layouts:
        if layout not in ("base", "extended"):
            raise ConfigurationError(f"loso.layouts: unknown layout {layout!r}")
    spec = _tune_spec(cfg)
    seeds = np.random.SeedSequence(cfg["run.seed"]).generate_state(len(codes))
    all_rows, manifests = [], []
    for layout in layouts:
        for i, held in enumerate(codes):
            where = os.path.join(out, layout, held)
            os.makedirs(where)
            posteriors, fold = {}, None
            for family in families:
                fold = run_fold(datasets, held, surnames, geo, family, layout, spec,
                                tune_size=_scaled(cfg, "tune.size"),
                                train_size=_scaled(cfg, "tune.train_size"),
                                floor=cfg["tables.floor"], seed=int(seeds[i]),
                                params=None if cfg["loso.tune"]
                                else cfg.prefixed(f"params.{family}."))
                posteriors[family] = fold.probs
                manifests.append(fold.manifest)
                dump_json(fold.manifest, os.path.join(where, f"manifest_{family}.json"))
                save_model(fold.model, os.path.join(where, f"model_{family}.json"),
                           seed=int(seeds[i]), manifest=fold.manifest)
                if fold.tune_table:
                    pd.DataFrame(fold.tune_table).to_csv(
                        os.path.join(where, f"tune_{family}.csv"), index=False,
                        lineterminator="\n", float_format="%.12g")
            method = "bisg" if layout == "base" else "extended"
            tables = fold.tables if fold is not None else TableSet(surnames, geo[held])
            if layout == "extended" and fold is None:
                others = {c: d for c, d in datasets.items() if c != held}
                tables = TableSet(surnames, geo[held],
                                  *_name_tables_from_persons(cfg, others, held))
            posteriors = {method: posterior_matrix(datasets[held], tables, method)[0],
                          **posteriors}
            report = full_report(datasets[held], posteriors, state=held, layout=layout,
                                 agg=cfg["run.agg"])
            _write_report(report, where)
            all_rows.append(report.long_table())
            print(f"[{layout}] held out {held}: {len(datasets[held])} records, "
                  f"methods {', '.join(posteriors)}")
    table = pd.concat(all_rows, ignore_index=True)
    _write_frame(table, os.path.join(out, "metrics.csv"))
    _write_text(os.path.join(out, "summary.txt"), appendix_tables(table))
    return {"states": codes, "families": families, "layouts": layouts,
            "folds": manifests, "inputs": _inputs_record(paths)}


def appendix_tables(table):
    """One race x method block per (layout, state) for AUC, RMSE and bias."""
    parts = []
    heading = {"base": "Block + Surname", "extended": "+ First + Middle"}
    for (layout, state), group in table.groupby(["layout", "state"], sort=False):
        for metric in ("auc", "rmse", "bias"):
            wide = group.pivot(index="race", columns="method", values=metric)
            wide = wide.reindex(index=list(RACE_NAMES),
                                columns=list(dict.fromkeys(group["method"])))
            text = wide.to_string(float_format=lambda v: f"{v:.3f}")
            parts.append(f"{state} | {heading.get(layout, layout)} | {metric}\n{text}\n")
    return "\n".join(parts)


COMMANDS = {
    "synth": cmd_synth,
    "build-tables": cmd_build_tables,
    "predict": cmd_predict,
    "train": cmd_train,
    "tune": cmd_tune,
    "evaluate": cmd_evaluate,
    "loso": cmd_loso,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="raceproxy", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.strip().split("\n")[0])
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--scale", type=float, help="multiplier for tune/train sample sizes")
        p.add_argument("--seed", type=int, help="top-level random seed")
        p.add_argument("--layout", choices=("base", "extended"))
        p.add_argument("--method", help="bisg|extended (predict)")
        p.add_argument("--agg", choices=("prob", "argmax"),
                       help="tract aggregation of posteriors")
        p.add_argument("--out", help="output directory (must not exist or be empty)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any configuration key")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args):
    if args.config:
        with open(args.config) as fh:
            cfg = RunConfig.parse(fh.read(), args.config)
    else:
        cfg = RunConfig.with_defaults({})
    for item in args.set:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    for flag, key in (("scale", "run.scale"), ("seed", "run.seed"),
                      ("layout", "run.layout"), ("method", "run.method"),
                      ("agg", "run.agg"), ("out", "run.out")):
        value = getattr(args, flag)
        if value is not None:
            cfg.set(key, value)
    cfg.validate()
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        with staged_output(cfg["run.out"]) as out:
            manifest = COMMANDS[args.command](cfg, out)
            _write_text(os.path.join(out, "config.cfg"), cfg.dump())
            dump_json({"command": args.command, **manifest},
                      os.path.join(out, "manifest.json"))
    except RaceProxyError as exc:
        print(f"raceproxy {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"raceproxy {args.command}: error: {exc}", file=sys.stderr)
        return IO_EXIT
    return 0


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
