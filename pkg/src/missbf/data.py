"""Dataset container, CSV ingestion and missingness bookkeeping.

Missing cells are stored as NaN; the missingness matrix ``M`` is derived
from the NaN pattern so the two can never disagree.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, EmptyDatasetError, ParseError, SchemaError

MISSING_TOKENS = frozenset({"", "na", "nan"})


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` (length n) and covariates ``X`` (n x p), NaN = missing.

    ``names`` holds the p covariate labels followed by the response label.
    """

    y: np.ndarray
    X: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise SchemaError(f"shape mismatch: y has {y.shape[0]} rows, X is {X.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise SchemaError("dataset needs n >= 1 rows and p >= 1 covariates")
        names = tuple(self.names)
        if len(names) != p + 1:
            raise SchemaError(f"expected {p + 1} column names, got {len(names)}")
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {names}")
        if np.isinf(X).any() or np.isinf(y).any():
            raise SchemaError("infinite values are not allowed")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_arrays(cls, y, X, covariate_names=None, response_name="y"):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if covariate_names is None:
            covariate_names = [f"x{j + 1}" for j in range(X.shape[1])]
        return cls(y=y, X=X, names=(*covariate_names, response_name))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return self.names[:-1]

    @property
    def response_name(self) -> str:
        return self.names[-1]

    @property
    def mask(self) -> np.ndarray:
        """n x (p+1) int matrix, 1 = missing; last column is the response."""
        return np.column_stack([np.isnan(self.X), np.isnan(self.y)]).astype(np.int8)

    @property
    def x_mask(self) -> np.ndarray:
        return np.isnan(self.X)

    @property
    def has_missing_covariates(self) -> bool:
        return bool(np.isnan(self.X).any())

    @property
    def is_complete(self) -> bool:
        return not (np.isnan(self.X).any() or np.isnan(self.y).any())

    def replace(self, y=None, X=None) -> "Dataset":
        return Dataset(
            y=self.y if y is None else y,
            X=self.X if X is None else X,
            names=self.names,
        )

    def take_rows(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(y=self.y[rows], X=self.X[rows], names=self.names)


@dataclass(frozen=True)
class ModelId:
    """Inclusion vector gamma; all-False is the intercept-only model."""

    bits: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @classmethod
    def from_indices(cls, indices, p: int) -> "ModelId":
        bits = [False] * p
        for j in indices:
            bits[j] = True
        return cls(tuple(bits))

    @classmethod
    def null(cls, p: int) -> "ModelId":
        return cls((False,) * p)

    @property
    def p_gamma(self) -> int:
        return sum(self.bits)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    @property
    def is_null(self) -> bool:
        return not any(self.bits)

    def __str__(self):
        return "".join("1" if b else "0" for b in self.bits)


MODEL_PRIORS = ("uniform", "hier")


@dataclass(frozen=True)
class AnalysisConfig:
    g_prime: float = 1.0
    draws: int = 1000
    burn_in: int = 500
    thin: int = 5
    seed: int = 0
    model_prior: str = "hier"
    threads: int = 1

    def __post_init__(self):
        if not (self.g_prime > 0 and math.isfinite(self.g_prime)):
            raise ConfigError(f"g_prime must be positive, got {self.g_prime}")
        if self.draws < 1:
            raise ConfigError(f"draws (J) must be >= 1, got {self.draws}")
        if self.burn_in < 0:
            raise ConfigError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.thin < 1:
            raise ConfigError(f"thin must be >= 1, got {self.thin}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.model_prior not in MODEL_PRIORS:
            raise ConfigError(f"model_prior must be one of {MODEL_PRIORS}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


def _parse_cell(token: str, row: int, column: str) -> float:
    tok = token.strip()
    if tok.lower() in MISSING_TOKENS:
        return math.nan
    try:
        value = float(tok)
    except ValueError:
        raise ParseError(
            f"unparsable numeric token {token!r} at row {row}, column {column!r}",
            row=row,
            column=column,
        ) from None
    if not math.isfinite(value):
        raise ParseError(
            f"non-finite value {token!r} at row {row}, column {column!r}",
            row=row,
            column=column,
        )
    return value


def load_csv(path, response: str) -> Dataset:
    """Read a header-bearing CSV; empty / NA / NaN cells become missing.

    Rows are numbered from 1 (first data row) in error messages.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        dupes = sorted({h for h in header if header.count(h) > 1})
        if dupes:
            raise SchemaError(f"{path}: duplicate column names {dupes}")
        if response not in header:
            raise SchemaError(f"{path}: response column {response!r} not in header {header}")
        rows = []
        for lineno, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(
                    f"{path}: row {lineno} has {len(record)} fields, expected {len(header)}",
                    row=lineno,
                )
            rows.append([_parse_cell(tok, lineno, col) for tok, col in zip(record, header)])
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    r = header.index(response)
    cov_idx = [j for j in range(len(header)) if j != r]
    if not cov_idx:
        raise SchemaError(f"{path}: no covariate columns besides the response")
    names = tuple(header[j] for j in cov_idx) + (response,)
    return Dataset(y=table[:, r], X=table[:, cov_idx], names=names)


def _fmt(v: float) -> str:
    return "NA" if math.isnan(v) else repr(float(v))


def write_csv(d: Dataset, path) -> None:
    """Write covariates then response; floats use shortest round-trip repr."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.names)
        for i in range(d.n):
            w.writerow([_fmt(v) for v in d.X[i]] + [_fmt(d.y[i])])


def observed_response_rows(d: Dataset) -> np.ndarray:
    return np.flatnonzero(~np.isnan(d.y))


def complete_row_mask(d: Dataset) -> np.ndarray:
    return ~(np.isnan(d.X).any(axis=1) | np.isnan(d.y))


def listwise_complete(d: Dataset) -> Dataset:
    keep = np.flatnonzero(complete_row_mask(d))
    if keep.size == 0:
        raise EmptyDatasetError("listwise deletion leaves zero complete rows")
    return d.take_rows(keep)


def global_missing_fraction(d: Dataset) -> float:
    """Fraction of rows with at least one missing covariate cell."""
    return float(np.isnan(d.X).any(axis=1).mean())


@dataclass
class Diagnostics:
    fatal: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    constant_columns: list[str] = field(default_factory=list)
    missing_columns: list[str] = field(default_factory=list)
    n: int = 0
    n0: int = 0
    global_missing_fraction: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.fatal

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "fatal": list(self.fatal),
            "warnings": list(self.warnings),
            "constant_columns": list(self.constant_columns),
            "missing_columns": list(self.missing_columns),
            "n": self.n,
            "n0": self.n0,
            "global_missing_fraction": self.global_missing_fraction,
        }


def validate(d: Dataset, cfg: AnalysisConfig | None = None, for_bf: bool = True) -> Diagnostics:
    """Collect fatal and informational flags without raising."""
    diag = Diagnostics(n=d.n, n0=int((~np.isnan(d.y)).sum()))
    diag.global_missing_fraction = global_missing_fraction(d)
    for j, name in enumerate(d.covariate_names):
        col = d.X[:, j]
        obs = col[~np.isnan(col)]
        if obs.size == 0:
            diag.missing_columns.append(name)
            diag.fatal.append(f"covariate {name!r} is entirely missing")
        elif np.ptp(obs) == 0.0:
            diag.constant_columns.append(name)
            msg = f"covariate {name!r} is constant over its observed values"
            (diag.fatal if for_bf else diag.warnings).append(msg)
    if diag.n0 < 3:
        diag.fatal.append(f"only {diag.n0} observed responses (need at least 3)")
    else:
        y0 = d.y[~np.isnan(d.y)]
        if np.ptp(y0) == 0.0:
            diag.fatal.append("observed response is constant")
    if d.n <= d.p and d.has_missing_covariates:
        diag.fatal.append(f"imputation needs n > p (n={d.n}, p={d.p})")
    if diag.global_missing_fraction > 0:
        diag.warnings.append(
            f"{diag.global_missing_fraction:.1%} of rows have a missing covariate"
        )
    return diag
