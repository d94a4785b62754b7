"""Race and ethnicity imputation from surnames, first and middle names and
census blocks, with Bayesian and supervised methods and their evaluation."""

from .bisg import (Fallback, PosteriorDistribution, bisg_posterior, extended_posterior,
                   posterior_matrix, predict_batch)
from .categories import N_RACES, RACE_NAMES, RaceCategory
from .errors import (ConfigurationError, DataError, DivergenceError, LeakageError,
                     RaceProxyError)
from .ingest import (Dataset, PersonRecord, canonicalize_name, filter_for_analysis,
                     parse_person_file)
from .metrics import (auc_one_vs_rest, calibration_curve, full_report, tract_bias,
                      tract_rmse)
from .tables import (GeoTable, NameTable, SurnameTable, TableSet, build_geo_table,
                     build_name_table, build_surname_table, make_feature_matrix)

__version__ = "0.1.0"

__all__ = [
    "Fallback", "PosteriorDistribution", "bisg_posterior", "extended_posterior",
    "posterior_matrix", "predict_batch", "N_RACES", "RACE_NAMES", "RaceCategory",
    "ConfigurationError", "DataError", "DivergenceError", "LeakageError",
    "RaceProxyError", "Dataset", "PersonRecord", "canonicalize_name",
    "filter_for_analysis", "parse_person_file", "auc_one_vs_rest", "calibration_curve",
    "full_report", "tract_bias", "tract_rmse", "GeoTable", "NameTable", "SurnameTable",
    "TableSet", "build_geo_table", "build_name_table", "build_surname_table",
    "make_feature_matrix",
]
