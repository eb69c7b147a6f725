"""Hide values in complete datasets to simulate MCAR or MAR missingness.

The response is never amputated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset, global_missing_fraction
from .exceptions import ConfigError, ValidationError

__all__ = ["AmputationSpec", "ampute", "ampute_mar", "ampute_mcar", "global_missing_fraction"]

MECHANISMS = ("MCAR", "MAR")


@dataclass(frozen=True)
class AmputationSpec:
    """Which covariates lose values, how often, and (for MAR) what drives it."""

    mechanism: str
    target_vars: tuple[int, ...]
    per_var_prob: float
    driver_vars: tuple[int, ...] = ()

    def __post_init__(self):
        mech = self.mechanism.upper()
        if mech not in MECHANISMS:
            raise ConfigError(f"mechanism must be MCAR or MAR, got {self.mechanism!r}")
        object.__setattr__(self, "mechanism", mech)
        object.__setattr__(self, "target_vars", tuple(int(j) for j in self.target_vars))
        object.__setattr__(self, "driver_vars", tuple(int(j) for j in self.driver_vars))
        if not 0.0 <= self.per_var_prob < 1.0:
            raise ConfigError(f"per_var_prob must lie in [0, 1), got {self.per_var_prob}")
        if len(set(self.target_vars)) != len(self.target_vars):
            raise ConfigError("duplicate target variables")
        if mech == "MAR":
            if not self.driver_vars:
                raise ConfigError("MAR amputation needs at least one driver variable")
            if set(self.driver_vars) & set(self.target_vars):
                raise ConfigError("driver and target variables must be disjoint")

    def check_against(self, d: Dataset) -> None:
        for j in self.target_vars + self.driver_vars:
            if not 0 <= j < d.p:
                raise ConfigError(f"column {j} is not a covariate index (p={d.p})")
        cols = list(self.target_vars + self.driver_vars)
        if cols and np.isnan(d.X[:, cols]).any():
            raise ValidationError("target and driver variables must be fully observed")


def ampute_mcar(d: Dataset, spec: AmputationSpec, rng: np.random.Generator) -> Dataset:
    """Drop each target cell independently with probability ``per_var_prob``."""
    spec.check_against(d)
    X = d.X.copy()
    hide = rng.random((d.n, len(spec.target_vars))) < spec.per_var_prob
    for t, j in enumerate(spec.target_vars):
        X[hide[:, t], j] = np.nan
    return d.replace(X=X)


def driver_score(X: np.ndarray, driver_vars) -> np.ndarray:
    """Equal-weight sum of standardised driver columns."""
    Z = X[:, list(driver_vars)]
    sd = Z.std(axis=0)
    sd[sd == 0] = 1.0
    return ((Z - Z.mean(axis=0)) / sd).sum(axis=1)


def ampute_mar(d: Dataset, spec: AmputationSpec, rng: np.random.Generator) -> Dataset:
    """Drop exactly round(prob * n) cells per target, favouring high driver scores.

    Selection weights are a logistic of the driver score centred at its
    (1 - prob) quantile; cells are drawn without replacement in proportion
    to those weights.
    """
    spec.check_against(d)
    n = d.n
    count = int(round(spec.per_var_prob * n))
    if spec.per_var_prob > 0 and count < 1:
        warnings.warn(
            f"per_var_prob * n = {spec.per_var_prob * n:.3g} < 1: nothing amputated",
            stacklevel=2,
        )
    X = d.X.copy()
    if count == 0:
        return d.replace(X=X)
    score = driver_score(d.X, spec.driver_vars)
    centre = np.quantile(score, 1.0 - spec.per_var_prob)
    weight = 1.0 / (1.0 + np.exp(-(score - centre)))
    prob = weight / weight.sum()
    for j in spec.target_vars:
        rows = rng.choice(n, size=count, replace=False, p=prob)
        X[rows, j] = np.nan
    return d.replace(X=X)


def ampute(d: Dataset, spec: AmputationSpec, rng: np.random.Generator) -> Dataset:
    if spec.mechanism == "MCAR":
        return ampute_mcar(d, spec, rng)
    return ampute_mar(d, spec, rng)
