"""Bayesian model comparison for linear regression with missing covariates."""

from .data import AnalysisConfig, Dataset, ModelId, load_csv, validate
from .errormodel import ErrorCovSpec, imputed_error_log_bf
from .exceptions import DomainError, MissbfError, ValidationError
from .gprime import LogBF, imputed_gprime_log_bf, listwise_log_bf, log_bf_complete_gprior
from .imputation import augmented_gibbs
from .models import impute_then_select_baseline, posterior_over_models

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "Dataset",
    "DomainError",
    "ErrorCovSpec",
    "LogBF",
    "MissbfError",
    "ModelId",
    "ValidationError",
    "augmented_gibbs",
    "impute_then_select_baseline",
    "imputed_error_log_bf",
    "imputed_gprime_log_bf",
    "listwise_log_bf",
    "load_csv",
    "log_bf_complete_gprior",
    "posterior_over_models",
    "validate",
]
