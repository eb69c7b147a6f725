"""Bayes factors between error covariance structures.

Two linear models share the design W = (1, X1) and differ only in the
error covariance: sigma^2 I against sigma^2 Psi for a known Psi.  Under
the right-Haar prior 1/sigma (flat in the intercept and slopes) each
marginal has the closed form

    log m = const - 1/2 log|Psi| - 1/2 log|W' Psi^-1 W| - (m - k)/2 log S_Psi

where k = p1 + 1, m is the number of observed responses and S_Psi is the
generalised residual sum of squares.  The constant only depends on (m, k)
and cancels in the Bayes factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, observed_response_rows
from .exceptions import ConfigError, DomainError
from .gprime import LogBF
from .numerics import chol_logdet, cholesky

IDENTITY = "identity"
FIXED = "fixed"
DIAG_COVARIATE = "diag_covariate"


@dataclass(frozen=True)
class ErrorCovSpec:
    """Known error covariance Psi, possibly driven by a covariate.

    ``kind`` is one of ``identity``, ``fixed`` (an n x n SPD ``matrix``)
    or ``diag_covariate`` (Psi_ii = sqrt(|x_i,column|)).
    """

    kind: str = IDENTITY
    matrix: np.ndarray | None = None
    column: int | None = None
    transform: str = "sqrt_abs"

    def __post_init__(self):
        if self.kind not in (IDENTITY, FIXED, DIAG_COVARIATE):
            raise ConfigError(f"unknown error covariance kind {self.kind!r}")
        if self.kind == FIXED:
            if self.matrix is None:
                raise ConfigError("fixed error covariance needs a matrix")
            mat = np.asarray(self.matrix, dtype=np.float64)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ConfigError("fixed error covariance must be square")
            cholesky(mat, "fixed Psi")
            object.__setattr__(self, "matrix", mat)
        if self.kind == DIAG_COVARIATE:
            if self.column is None or self.column < 0:
                raise ConfigError("diag_covariate needs a covariate column index")
            if self.transform != "sqrt_abs":
                raise ConfigError(f"unsupported transform {self.transform!r}")

    @classmethod
    def identity(cls):
        return cls(IDENTITY)

    @classmethod
    def fixed(cls, matrix):
        return cls(FIXED, matrix=matrix)

    @classmethod
    def diag_from_covariate(cls, column: int, transform: str = "sqrt_abs"):
        return cls(DIAG_COVARIATE, column=column, transform=transform)

    @property
    def depends_on(self) -> tuple[int, ...]:
        return (self.column,) if self.kind == DIAG_COVARIATE else ()

    def realize(self, X_rows: np.ndarray, rows: np.ndarray):
        """Psi on the selected rows: None (identity), a vector (diagonal) or a matrix."""
        if self.kind == IDENTITY:
            return None
        if self.kind == FIXED:
            if self.matrix.shape[0] <= rows.max(initial=0):
                raise ConfigError("fixed Psi is smaller than the dataset")
            return self.matrix[np.ix_(rows, rows)]
        if self.column >= X_rows.shape[1]:
            raise ConfigError(f"Psi column {self.column} is not a covariate")
        diag = np.sqrt(np.abs(X_rows[:, self.column]))
        if not np.all(diag > 0):
            raise DomainError("Psi has a zero diagonal entry (covariate value 0)")
        return diag

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == DIAG_COVARIATE:
            out.update(column=self.column, transform=self.transform)
        if self.kind == FIXED:
            out["shape"] = list(self.matrix.shape)
        return out


@dataclass(frozen=True)
class GlsFit:
    s_psi: float
    logdet_psi: float
    logdet_wpw: float
    degenerate: bool = False


def _whiten(y, W, Psi):
    if Psi is None:
        return y, W, 0.0
    Psi = np.asarray(Psi, dtype=np.float64)
    if Psi.ndim == 1:
        if not np.all(Psi > 0):
            raise DomainError("diagonal Psi must be positive")
        s = np.sqrt(Psi)
        return y / s, W / s[:, None], float(np.log(Psi).sum())
    L = cholesky(Psi, "Psi")
    yt = np.linalg.solve(L, y)
    Wt = np.linalg.solve(L, W)
    return yt, Wt, float(chol_logdet(L))


def gls_sse(y, W, Psi=None) -> GlsFit:
    """Generalised least squares fit of y on W under error covariance Psi.

    ``Psi`` may be None (identity), a 1-D positive diagonal, or a full SPD
    matrix.  Works on the whitened problem Psi^{-1/2} y ~ Psi^{-1/2} W.
    """
    y = np.asarray(y, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    m, k = W.shape
    if m <= k:
        raise DomainError(f"need more rows than design columns (m={m}, k={k})")
    yt, Wt, logdet_psi = _whiten(y, W, Psi)
    Q, R = np.linalg.qr(Wt)
    rdiag = np.abs(np.diagonal(R))
    if rdiag.min() <= 1e-10 * max(rdiag.max(), 1e-300):
        raise DomainError("design is rank deficient under the Psi inner product")
    resid = yt - Q @ (Q.T @ yt)
    s = float(resid @ resid)
    degenerate = s <= 1e-20 * float(yt @ yt)
    return GlsFit(
        s_psi=s,
        logdet_psi=logdet_psi,
        logdet_wpw=float(2.0 * np.log(rdiag).sum()),
        degenerate=degenerate,
    )


def log_marginal_haar(y, W, Psi=None) -> float:
    """Log marginal under the 1/sigma prior, up to a constant in (m, k)."""
    W = np.asarray(W, dtype=np.float64)
    m, k = W.shape
    fit = gls_sse(y, W, Psi)
    if fit.degenerate:
        raise DomainError("exact fit: generalised residual sum of squares is zero")
    return -0.5 * fit.logdet_psi - 0.5 * fit.logdet_wpw - 0.5 * (m - k) * math.log(fit.s_psi)


def haar_log_constant(m: int, k: int) -> float:
    """The (m, k)-only constant omitted by :func:`log_marginal_haar`."""
    nu = m - k
    return (
        -0.5 * nu * math.log(2 * math.pi)
        + math.lgamma(0.5 * nu)
        + 0.5 * (nu - 2) * math.log(2.0)
    )


def _design(X_rows, x1_columns):
    return np.column_stack([np.ones(X_rows.shape[0]), X_rows[:, list(x1_columns)]])


def _log_mean_pair(a, b):
    """log(mean e^a) - log(mean e^b) and its delta-method standard error."""
    J = a.size
    wa = np.exp(a - a.max())
    wb = np.exp(b - b.max())
    ma, mb = wa.mean(), wb.mean()
    value = (a.max() + math.log(ma)) - (b.max() + math.log(mb))
    if J == 1:
        return value, 0.0
    cov = np.cov(np.vstack([wa / ma, wb / mb]), ddof=1)
    var = (cov[0, 0] + cov[1, 1] - 2 * cov[0, 1]) / J
    return value, math.sqrt(max(var, 0.0))


def imputed_error_log_bf(
    d: Dataset,
    x1_columns,
    psi1: ErrorCovSpec,
    psi2: ErrorCovSpec,
    draws=None,
) -> LogBF:
    """log B_12: ratio of the two draw-averaged Haar marginals.

    Each model's marginal is averaged over the imputation draws separately,
    then the ratio is taken.  Rows with a missing response are dropped from
    y, the design and Psi.  When none of the cells involved are missing the
    result is deterministic and carries no Monte Carlo error.
    """
    x1_columns = [int(c) for c in x1_columns]
    for c in x1_columns + [c for s in (psi1, psi2) for c in s.depends_on]:
        if not 0 <= c < d.p:
            raise ConfigError(f"column {c} is not a covariate index (p={d.p})")
    rows = observed_response_rows(d)
    y0 = d.y[rows]
    k = len(x1_columns) + 1
    if rows.size <= k:
        raise DomainError(f"need n0 > p1 + 1 (n0={rows.size}, p1={k - 1})")
    used = sorted(set(x1_columns) | set(psi1.depends_on) | set(psi2.depends_on))
    needs_draws = bool(np.isnan(d.X[np.ix_(rows, used)]).any()) if used else False

    def pair(X_rows):
        W = _design(X_rows, x1_columns)
        return (
            log_marginal_haar(y0, W, psi1.realize(X_rows, rows)),
            log_marginal_haar(y0, W, psi2.realize(X_rows, rows)),
        )

    if not needs_draws:
        a, b = pair(d.X[rows])
        return LogBF(a - b, None, 1)
    if not draws:
        raise ValueError("covariates involved have missing cells: imputation draws required")
    la = np.empty(len(draws))
    lb = np.empty(len(draws))
    for j, dr in enumerate(draws):
        la[j], lb[j] = pair(dr.x_completed[rows])
    value, se = _log_mean_pair(la, lb)
    return LogBF(float(value), float(se), len(draws))
