"""Model families, fitting by name, and the model file format."""

import json

from ..errors import ConfigurationError, DataError
from ..tables import dump_json, n_features
from .gbm import GbmModel, train_gbm
from .mlr import ElasticNetConfig, MlrModel, train_mlr
from .trees import ForestModel, train_forest

FAMILIES = ("mlr", "elnet", "rf", "gbm")
MODEL_FORMAT_VERSION = 1

# (low, high, scale) with scale in {"log", "linear", "int"}
DEFAULT_RANGES = {
    "mlr": {},
    "elnet": {"lambda": (1e-6, 1e1, "log"), "delta": (0.0, 1.0, "linear")},
    "rf": {"n_trees": (50, 500, "int"), "max_depth": (2, 10, "int"),
           "min_leaf": (1, 50, "int"), "feature_subsample": (0.2, 1.0, "linear")},
    "gbm": {"iterations": (50, 500, "int"), "learning_rate": (0.01, 0.3, "log"),
            "max_depth": (2, 8, "int"), "gamma": (0.0, 1.0, "linear"),
            "leaf_penalty": (1e-3, 10.0, "log")},
}

DEFAULT_PARAMS = {
    "mlr": {},
    "elnet": {"lambda": 1e-4, "delta": 0.5},
    "rf": {"n_trees": 100, "max_depth": 10, "min_leaf": 5, "feature_subsample": None},
    "gbm": {"iterations": 100, "learning_rate": 0.1, "max_depth": 4, "gamma": 0.0,
            "leaf_penalty": 1.0},
}


def check_family(family):
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown model family {family!r}; "
                                 f"choose from {', '.join(FAMILIES)}")


def fit_model(family, X, y, params=None, seed=0, layout=None):
    """Train one model of ``family`` with ``params`` (defaults filled in)."""
    check_family(family)
    p = dict(DEFAULT_PARAMS[family])
    p.update(params or {})
    unknown = set(p) - set(DEFAULT_PARAMS[family])
    if unknown:
        raise ConfigurationError(f"{family}: unknown hyperparameter(s) {sorted(unknown)}")
    if family == "mlr":
        model = train_mlr(X, y, reg=None, seed=seed, layout=layout)
    elif family == "elnet":
        model = train_mlr(X, y, reg=ElasticNetConfig(p["lambda"], p["delta"]),
                          seed=seed, layout=layout)
    elif family == "rf":
        model = train_forest(X, y, n_trees=int(p["n_trees"]),
                             feature_subsample=p["feature_subsample"],
                             max_depth=int(p["max_depth"]),
                             min_leaf=int(p["min_leaf"]), seed=seed, layout=layout)
    else:
        model = train_gbm(X, y, iterations=int(p["iterations"]),
                          learning_rate=p["learning_rate"],
                          max_depth=int(p["max_depth"]), gamma=p["gamma"],
                          leaf_penalty=p["leaf_penalty"], seed=seed, layout=layout)
    # record the fully resolved hyperparameters
    object.__setattr__(model, "params", p)
    return model


def _family_of(model):
    return getattr(model, "family", None)


def save_model(model, path, seed=None, manifest=None):
    """Write ``model`` as versioned JSON; returns the sha256 of the file."""
    doc = {"format": "raceproxy-model", "version": MODEL_FORMAT_VERSION,
           "family": _family_of(model), "layout": model.layout,
           "params": model.params, "seed": seed, "manifest": manifest or {},
           "model": model.to_dict()}
    return dump_json(doc, path)


def load_model(path):
    """Read a model file; returns ``(model, document metadata)``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "raceproxy-model":
        raise DataError(f"{path}: not a model file")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model version {doc.get('version')}")
    family = doc["family"]
    meta = {"layout": doc["layout"], "params": doc["params"], "family": family}
    if family in ("mlr", "elnet"):
        model = MlrModel.from_dict(doc["model"], **meta)
    elif family == "rf":
        model = ForestModel.from_dict(doc["model"], **meta)
    elif family == "gbm":
        model = GbmModel.from_dict(doc["model"], **meta)
    else:
        raise DataError(f"{path}: unknown model family {family!r}")
    return model, {k: v for k, v in doc.items() if k != "model"}


def check_layout(model, layout):
    if model.layout is not None and model.layout != layout:
        raise ConfigurationError(f"model was trained on the {model.layout!r} layout "
                                 f"but the tables provide {layout!r}")
    n_features(layout)


__all__ = ["FAMILIES", "DEFAULT_RANGES", "DEFAULT_PARAMS", "fit_model", "save_model",
           "load_model", "check_layout"]
