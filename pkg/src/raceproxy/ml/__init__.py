"""Supervised classifiers on BISG probability features."""

from .base import base_rates, log_loss, softmax
from .gbm import GbmModel, train_gbm
from .loso import LosoFold, check_no_leakage, run_fold, run_loso
from .mlr import ElasticNetConfig, MlrModel, predict_mlr, train_mlr
from .models import (DEFAULT_PARAMS, DEFAULT_RANGES, FAMILIES, check_layout, fit_model,
                     load_model, save_model)
from .trees import ForestModel, TreeModel, train_forest, train_tree
from .tuning import TuneResult, TuneSpec, latin_hypercube, stratified_folds, tune

__all__ = [
    "base_rates", "log_loss", "softmax", "GbmModel", "train_gbm", "LosoFold",
    "check_no_leakage", "run_fold", "run_loso", "ElasticNetConfig", "MlrModel",
    "predict_mlr", "train_mlr", "DEFAULT_PARAMS", "DEFAULT_RANGES", "FAMILIES",
    "check_layout", "fit_model", "load_model", "save_model", "ForestModel", "TreeModel",
    "train_forest", "train_tree", "TuneResult", "TuneSpec", "latin_hypercube",
    "stratified_folds", "tune",
]
