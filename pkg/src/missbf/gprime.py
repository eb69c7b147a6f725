"""Bayes factors for variable selection under g-type priors.

Every Bayes factor here is against the intercept-only model.  With a flat
intercept and the 1/sigma prior both integrated out, a model gamma with
prior beta_gamma ~ N(0, g' sigma^2 Sigma_gg^{-1}) gives, for one completed
covariate matrix and one draw of Sigma,

    log r = (n0-1)/2 * [log S0 - log(S0 - q)] - 1/2 * log|I + g' Xc'Xc Sigma_gg^{-1}|

with Xc the sample-centred design over the rows whose response is
observed, S0 the centred response sum of squares and
q = y'Xc (Xc'Xc + Sigma_gg/g')^{-1} Xc'y.  The imputed g'-Bayes factor is
the Monte Carlo mean of r over posterior imputation draws.  Putting
Sigma_gg = Xc'Xc/n0 and g' = 1 recovers Zellner's g-prior with g = n0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, ModelId, listwise_complete, observed_response_rows
from .exceptions import DomainError
from .numerics import chol_logdet, cholesky, log_mean_exp

MAX_SKIP_FRACTION = 0.10
_CHUNK_BYTES = 32 * 2**20


@dataclass(frozen=True)
class LogBF:
    """Natural-log Bayes factor of a model against the null model."""

    value: float
    mc_std_error: float | None = None
    j_used: int = 1
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "mc_std_error": self.mc_std_error,
            "j_used": self.j_used,
            "skipped": self.skipped,
        }


@dataclass(frozen=True)
class NullFitStats:
    n0: int
    s0: float
    ybar: float


def null_fit_stats(y0) -> NullFitStats:
    y0 = np.asarray(y0, dtype=np.float64)
    ybar = float(y0.mean())
    s0 = float(((y0 - ybar) ** 2).sum())
    return NullFitStats(n0=y0.size, s0=s0, ybar=ybar)


def _check_response(stats: NullFitStats, p_gamma: int) -> None:
    if stats.n0 <= p_gamma + 1:
        raise DomainError(f"need n0 > p_gamma + 1 (n0={stats.n0}, p_gamma={p_gamma})")
    if not stats.s0 > 0:
        raise DomainError("response has zero variance over the observed rows")


def residual_ss(y, X) -> float:
    """Residual sum of squares of y on an intercept plus the columns of X."""
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    yc = y - y.mean()
    if X.shape[1] == 0:
        return float(yc @ yc)
    Xc = X - X.mean(axis=0)
    Q, R = np.linalg.qr(Xc)
    diag = np.abs(np.diagonal(R))
    scale = np.sqrt((Xc**2).sum(axis=0)).max()
    if scale == 0 or diag.min() <= 1e-10 * scale:
        raise DomainError("design matrix is collinear after centring")
    resid = yc - Q @ (Q.T @ yc)
    return float(resid @ resid)


def log_bf_complete_gprior(y, Xg, g: float | None = None) -> LogBF:
    """Zellner g-prior Bayes factor on complete data (default g = n)."""
    y = np.asarray(y, dtype=np.float64)
    Xg = np.asarray(Xg, dtype=np.float64).reshape(y.size, -1)
    n, k = Xg.shape
    if k == 0:
        return LogBF(0.0)
    stats = null_fit_stats(y)
    _check_response(stats, k)
    g = float(n if g is None else g)
    s_gamma = residual_ss(y, Xg)
    value = -0.5 * (n - 1) * math.log1p(g * s_gamma / stats.s0) + 0.5 * (n - k - 1) * math.log1p(g)
    return LogBF(value)


def per_draw_log_ratio(y0, Xg_n0, sigma_gg, g_prime: float = 1.0) -> float:
    """log of m_gamma / m_0 for one completed design and one Sigma_gg draw."""
    y0 = np.asarray(y0, dtype=np.float64)
    X = np.asarray(Xg_n0, dtype=np.float64).reshape(y0.size, -1)
    k = X.shape[1]
    if k == 0:
        return 0.0
    sigma_gg = np.asarray(sigma_gg, dtype=np.float64).reshape(k, k)
    stats = null_fit_stats(y0)
    _check_response(stats, k)
    yc = y0 - stats.ybar
    Xc = X - X.mean(axis=0)
    L_S = cholesky(sigma_gg, "Sigma_gg")
    A = Xc.T @ Xc + sigma_gg / g_prime
    L_A = cholesky(A, "Xc'Xc + Sigma_gg/g'")
    beta = np.linalg.solve(L_A.T, np.linalg.solve(L_A, Xc.T @ yc))
    # S0 - q as a penalised residual: a sum of non-negative terms
    e = yc - Xc @ beta
    resid = float(e @ e + beta @ (sigma_gg / g_prime) @ beta)
    if not resid > 0:
        raise DomainError("S0 - q is not positive (ill-conditioned design)")
    log_det = k * math.log(g_prime) + chol_logdet(L_A) - chol_logdet(L_S)
    return 0.5 * (stats.n0 - 1) * (math.log(stats.s0) - math.log(resid)) - 0.5 * float(log_det)


class GPrimeEngine:
    """Per-draw log ratios for many models over one shared draw set.

    Centred Gram matrices Xc'Xc and cross-products Xc'y are formed once per
    draw for all p covariates; each model then works with sub-blocks, so
    the same draws serve every model.
    """

    def __init__(self, y0, X_stack, sigma_stack, g_prime: float = 1.0):
        y0 = np.asarray(y0, dtype=np.float64)
        X_stack = np.asarray(X_stack, dtype=np.float64)
        if X_stack.ndim == 2:
            X_stack = X_stack[None]
        sigma_stack = np.asarray(sigma_stack, dtype=np.float64)
        if sigma_stack.ndim == 2:
            sigma_stack = sigma_stack[None]
        self.stats = null_fit_stats(y0)
        self.g_prime = float(g_prime)
        self.J, self.n0, self.p = X_stack.shape
        if y0.size != self.n0:
            raise ValueError("y0 and X rows disagree")
        Xc = X_stack - X_stack.mean(axis=1, keepdims=True)
        yc = y0 - self.stats.ybar
        self.G = np.einsum("jni,jnk->jik", Xc, Xc)
        self.b = np.einsum("jni,n->ji", Xc, yc)
        self.sigma = sigma_stack

    def log_ratios(self, idx: np.ndarray) -> np.ndarray:
        """(J, M) per-draw log ratios for M models of equal size k.

        ``idx`` is an (M, k) integer array of covariate indices.  Draws that
        fail numerically come back as NaN.
        """
        idx = np.asarray(idx, dtype=np.intp)
        M, k = idx.shape
        if k == 0:
            return np.zeros((self.J, M))
        _check_response(self.stats, k)
        out = np.empty((self.J, M))
        per_model = self.J * k * k * 8 * 4
        step = max(1, _CHUNK_BYTES // max(per_model, 1))
        for lo in range(0, M, step):
            out[:, lo : lo + step] = self._chunk(idx[lo : lo + step])
        return out

    def _chunk(self, idx):
        rows, cols = idx[:, :, None], idx[:, None, :]
        G = self.G[:, rows, cols]
        S = self.sigma[:, rows, cols]
        b = self.b[:, idx]
        try:
            return self._ratios(G, S, b)
        except np.linalg.LinAlgError:
            pass
        # isolate the failing draws
        J, M = G.shape[:2]
        out = np.full((J, M), np.nan)
        for j in range(J):
            for m in range(M):
                try:
                    out[j, m] = self._ratios(G[j, m][None], S[j, m][None], b[j, m][None])[0]
                except np.linalg.LinAlgError:
                    pass
        return out

    def _ratios(self, G, S, b):
        k = G.shape[-1]
        n0, s0, gp = self.stats.n0, self.stats.s0, self.g_prime
        L_A = np.linalg.cholesky(G + S / gp)
        L_S = np.linalg.cholesky(S)
        v = np.linalg.solve(L_A, b[..., None])[..., 0]
        resid = s0 - (v * v).sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            log_resid = np.where(resid > 0, np.log(np.where(resid > 0, resid, 1.0)), np.nan)
        log_det = k * math.log(gp) + chol_logdet(L_A) - chol_logdet(L_S)
        return 0.5 * (n0 - 1) * (math.log(s0) - log_resid) - 0.5 * log_det

    def log_bfs(self, idx: np.ndarray):
        """Monte Carlo log Bayes factors for equal-size models.

        Returns arrays ``(value, se, skipped)`` of length M.
        """
        r = self.log_ratios(idx)
        ok = np.isfinite(r)
        skipped = (~ok).sum(axis=0)
        if np.all(ok):
            value, se = log_mean_exp(r, axis=0)
            return value, se, skipped
        value = np.empty(r.shape[1])
        se = np.empty(r.shape[1])
        for m in range(r.shape[1]):
            good = r[ok[:, m], m]
            if good.size == 0:
                value[m], se[m] = np.nan, np.nan
            else:
                v, s = log_mean_exp(good)
                value[m], se[m] = float(v), float(s)
        return value, se, skipped


def check_skips(skipped: int, J: int, model: ModelId) -> None:
    if skipped > MAX_SKIP_FRACTION * J:
        raise DomainError(
            f"model {model}: {skipped} of {J} draws failed numerically (limit 10%)"
        )


def response_design(d: Dataset, draws):
    """Observed y and the completed covariates restricted to those rows."""
    rows = observed_response_rows(d)
    y0 = d.y[rows]
    X_stack = np.stack([dr.x_completed[rows] for dr in draws])
    sigma_stack = np.stack([dr.params.sigma for dr in draws])
    return y0, X_stack, sigma_stack


def imputed_gprime_log_bf(d: Dataset, gamma: ModelId, draws, g_prime: float = 1.0) -> LogBF:
    """Imputed g'-Bayes factor of ``gamma`` against the null model."""
    if len(draws) == 0:
        raise ValueError("at least one imputation draw is required")
    if gamma.is_null:
        return LogBF(0.0, 0.0, len(draws))
    y0, X_stack, sigma_stack = response_design(d, draws)
    engine = GPrimeEngine(y0, X_stack, sigma_stack, g_prime)
    value, se, skipped = engine.log_bfs(gamma.indices[None, :])
    check_skips(int(skipped[0]), engine.J, gamma)
    return LogBF(float(value[0]), float(se[0]), engine.J - int(skipped[0]), int(skipped[0]))


def listwise_log_bf(d: Dataset, gamma: ModelId) -> LogBF:
    """g-prior Bayes factor (g = rows kept) after listwise deletion."""
    if gamma.is_null:
        return LogBF(0.0)
    lc = listwise_complete(d)
    need = gamma.p_gamma + 2
    if lc.n < need:
        raise DomainError(
            f"listwise deletion keeps {lc.n} rows; model {gamma} needs {need} "
            f"(short by {need - lc.n})"
        )
    return log_bf_complete_gprior(lc.y, lc.X[:, gamma.indices], g=lc.n)


def complete_gprior_log_bfs(y, X_stack, idx, g: float | None = None) -> np.ndarray:
    """g-prior log Bayes factors for M equal-size models on m complete designs.

    ``X_stack`` is (m, n, p); returns an (m, M) array.  Residual sums of
    squares come from the centred normal equations.
    """
    y = np.asarray(y, dtype=np.float64)
    X_stack = np.asarray(X_stack, dtype=np.float64)
    if X_stack.ndim == 2:
        X_stack = X_stack[None]
    idx = np.asarray(idx, dtype=np.intp)
    m, n, _ = X_stack.shape
    M, k = idx.shape
    if k == 0:
        return np.zeros((m, M))
    stats = null_fit_stats(y)
    _check_response(stats, k)
    g = float(n if g is None else g)
    Xc = X_stack - X_stack.mean(axis=1, keepdims=True)
    yc = y - stats.ybar
    G = np.einsum("jni,jnk->jik", Xc, Xc)[:, idx[:, :, None], idx[:, None, :]]
    b = np.einsum("jni,n->ji", Xc, yc)[:, idx]
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise DomainError("collinear design in complete-data Bayes factor") from None
    v = np.linalg.solve(L, b[..., None])[..., 0]
    s_gamma = np.maximum(stats.s0 - (v * v).sum(axis=-1), 0.0)
    return -0.5 * (n - 1) * np.log1p(g * s_gamma / stats.s0) + 0.5 * (n - k - 1) * math.log1p(g)
