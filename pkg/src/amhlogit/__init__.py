"""Bivariate logistic regression for a binary and an ordinal outcome with
Ali-Mikhail-Haq latent variables."""
__version__ = "0.1.0"

from .core import AmhParams, amh_cdf, amh_density, amh_cdf_series, logistic_cdf, sample
from .data import Dataset, DataError, ModelSpec, ingest_csv, load_trekking
from .estimation import FitResult, ParamVector, delta_method, fit, loglik, starting_values
from .observed import CellTable, Thresholds, cell_probabilities, goodness_of_fit, pmf


__all__ = [
    "AmhParams", "amh_cdf", "amh_density", "amh_cdf_series", "logistic_cdf", "sample",
    "Dataset", "DataError", "ModelSpec", "ingest_csv", "load_trekking",
    "FitResult", "ParamVector", "delta_method", "fit", "loglik", "starting_values",
    "CellTable", "Thresholds", "cell_probabilities", "goodness_of_fit", "pmf",
]
