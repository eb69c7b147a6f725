"""Multivariate-normal imputation under the reference prior.

The covariate rows are modelled as iid N_p(mu, Sigma) with the objective
prior

    pi(mu, Sigma) ∝ |Sigma|^{-(p+1)/2} |I + Sigma ∘ Sigma^{-1}|^{-1/2},

(``∘`` is the elementwise product).  Its posterior given a completed
matrix is sampled exactly by rejection from the conjugate posterior under
|Sigma|^{-(p+1)/2}, and the missing cells are filled by an augmented Gibbs
scheme that alternates parameter and cell draws.  The response never
enters the imputation.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve

from .data import AnalysisConfig, Dataset, validate
from .exceptions import DomainError, SamplerAssertionError, ValidationError
from .numerics import chol_logdet, cholesky

logger = logging.getLogger(__name__)

ACCEPT_SLACK = 1e-12
MAX_BATCH = 256
LOG_HALF_LOG2 = 0.5 * math.log(2.0)


@dataclass(frozen=True)
class MvnParams:
    mu: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray

    @classmethod
    def from_sigma(cls, mu, sigma) -> "MvnParams":
        mu = np.asarray(mu, dtype=np.float64).reshape(-1)
        sigma = np.asarray(sigma, dtype=np.float64)
        if sigma.shape != (mu.size, mu.size):
            raise DomainError(f"Sigma has shape {sigma.shape}, expected {(mu.size, mu.size)}")
        if not np.allclose(sigma, sigma.T, rtol=1e-12, atol=0.0):
            raise DomainError("Sigma is not symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        return cls(mu=mu, sigma=sigma, chol=cholesky(sigma, "Sigma"))

    @property
    def p(self) -> int:
        return self.mu.size

    def precision(self) -> np.ndarray:
        return cho_solve((self.chol, True), np.eye(self.p))


@dataclass(frozen=True)
class ImputationDraw:
    params: MvnParams
    x_completed: np.ndarray
    draw_index: int


def _log_hadamard_det(sigma: np.ndarray, precision: np.ndarray) -> float:
    """log|I + Sigma ∘ Sigma^{-1}|."""
    p = sigma.shape[0]
    M = np.eye(p) + sigma * precision
    return float(chol_logdet(cholesky(0.5 * (M + M.T), "I + Sigma∘Sigma^-1")))


def reference_log_prior(params: MvnParams) -> float:
    """Unnormalised log reference prior density at (mu, Sigma)."""
    p = params.p
    logdet = float(chol_logdet(params.chol))
    return -0.5 * (p + 1) * logdet - 0.5 * _log_hadamard_det(params.sigma, params.precision())


class ReferencePosterior:
    """Exact sampler for (mu, Sigma) | complete covariate matrix.

    Proposals come from mu | Sigma ~ N(xbar, Sigma/n) and Sigma ~ IW(n-1, S)
    with S the centred scatter matrix; a proposal is accepted with
    probability 2^{p/2} |I + Sigma ∘ Sigma^{-1}|^{-1/2}.  That quantity never
    exceeds one because Sigma ∘ Sigma^{-1} - I is positive semidefinite
    (Fiedler's inequality); the bound is still checked on every proposal.
    """

    def __init__(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        n, p = x.shape
        if n <= p:
            raise DomainError(f"need n > p to sample Sigma (n={n}, p={p})")
        self.n, self.p = n, p
        self.xbar = x.mean(axis=0)
        xc = x - self.xbar
        scatter = xc.T @ xc
        self.scatter_chol = cholesky(scatter, "covariate scatter matrix")
        self.df = n - 1
        self.proposals = 0
        self.max_log_accept = -math.inf

    def _propose(self, rng: np.random.Generator, k: int):
        """k independent (Sigma, Sigma^{-1}) proposals, stacked."""
        p, L = self.p, self.scatter_chol
        A = np.zeros((k, p, p))
        A[:, np.arange(p), np.arange(p)] = np.sqrt(rng.chisquare(self.df - np.arange(p), size=(k, p)))
        low = np.tril_indices(p, -1)
        A[:, low[0], low[1]] = rng.standard_normal((k, len(low[0])))
        # W = L^{-T} A A^T L^{-1} ~ Wishart(df, S^{-1}); Sigma = W^{-1} = L A^{-T} A^{-1} L^T
        LinvT_A = np.linalg.solve(L.T, A)
        precision = LinvT_A @ np.swapaxes(LinvT_A, 1, 2)
        B = L @ np.swapaxes(np.linalg.inv(A), 1, 2)
        sigma = B @ np.swapaxes(B, 1, 2)
        sigma = 0.5 * (sigma + np.swapaxes(sigma, 1, 2))
        precision = 0.5 * (precision + np.swapaxes(precision, 1, 2))
        return sigma, precision

    def log_accept(self, sigma: np.ndarray, precision: np.ndarray) -> np.ndarray:
        M = np.eye(self.p) + sigma * precision
        sign, logdet = np.linalg.slogdet(M)
        if np.any(sign <= 0):
            raise DomainError("I + Sigma∘Sigma^-1 is not positive definite")
        return self.p * LOG_HALF_LOG2 - 0.5 * logdet

    def draw(self, rng: np.random.Generator, batch: int = 1) -> MvnParams:
        """Rejection sampling; proposals are generated ``batch`` at a time and
        examined in order, so the first accepted one is returned."""
        p = self.p
        while True:
            sigma, precision = self._propose(rng, batch)
            log_acc = self.log_accept(sigma, precision)
            u = rng.random(batch)
            top = float(log_acc.max())
            self.max_log_accept = max(self.max_log_accept, top)
            if top > math.log1p(ACCEPT_SLACK):
                raise SamplerAssertionError(
                    f"rejection acceptance probability {math.exp(top)!r} exceeds 1"
                )
            hits = np.flatnonzero(np.log(u) < log_acc)
            if hits.size:
                first = int(hits[0])
                self.proposals += first + 1
                sigma = sigma[first]
                break
            self.proposals += batch
        chol = cholesky(sigma, "proposed Sigma")
        mu = self.xbar + chol @ rng.standard_normal(p) / math.sqrt(self.n)
        return MvnParams(mu=mu, sigma=sigma, chol=chol)


def sample_nu_posterior_complete(x_complete: np.ndarray, rng: np.random.Generator) -> MvnParams:
    """One exact posterior draw of (mu, Sigma) given a complete covariate matrix."""
    return ReferencePosterior(x_complete).draw(rng)


def conditional_mvn(x_row, params: MvnParams):
    """Gaussian conditional of the missing coordinates (NaN) of one row.

    Returns ``(mean, cov)`` over the missing coordinates, in column order.
    """
    x_row = np.asarray(x_row, dtype=np.float64)
    m = np.isnan(x_row)
    if not m.any():
        raise ValueError("row has no missing coordinates")
    o = ~m
    if not o.any():
        return params.mu.copy(), params.sigma.copy()
    S = params.sigma
    S_oo = S[np.ix_(o, o)]
    S_mo = S[np.ix_(m, o)]
    L_oo = cholesky(S_oo, "observed block of Sigma")
    K = cho_solve((L_oo, True), S_mo.T).T
    mean = params.mu[m] + K @ (x_row[o] - params.mu[o])
    cov = S[np.ix_(m, m)] - K @ S_mo.T
    return mean, 0.5 * (cov + cov.T)


def _impute_rows(X, rows, miss, params: MvnParams, rng) -> None:
    """Draw all missing cells of ``rows`` in place, batched over rows.

    Each row uses the precision form: with Q = Sigma^{-1}, the missing block
    is N(mu_m - Q_mm^{-1} Q_mo (x_o - mu_o), Q_mm^{-1}).  Embedding Q_mm in a
    p x p matrix with identity on the observed block lets every row share
    one batched factorisation regardless of its pattern.
    """
    if rows.size == 0:
        return
    Q = params.precision()
    D = miss[rows]
    p = params.p
    dev = np.where(D, 0.0, X[rows] - params.mu)
    r = np.where(D, dev @ Q, 0.0)
    Qt = np.where(D[:, :, None] & D[:, None, :], Q, 0.0)
    Qt[:, np.arange(p), np.arange(p)] = np.where(D, np.diagonal(Q), 1.0)
    try:
        Lt = np.linalg.cholesky(Qt)
    except np.linalg.LinAlgError:
        raise DomainError("missing-block precision is not positive definite") from None
    z = rng.standard_normal((rows.size, p))
    delta = np.linalg.solve(Qt, -r[:, :, None])[:, :, 0]
    noise = np.linalg.solve(np.swapaxes(Lt, 1, 2), z[:, :, None])[:, :, 0]
    new = params.mu + delta + noise
    block = X[rows]
    block[D] = new[D]
    X[rows] = block


def initial_completion(d: Dataset, init: str = "mean", rng=None) -> np.ndarray:
    """Fill missing covariate cells to start the chain.

    ``"mean"`` uses observed column means; ``"random"`` draws each missing
    cell independently from a normal with the observed column mean and sd.
    """
    X = np.array(d.X, dtype=np.float64)
    miss = np.isnan(X)
    if not miss.any():
        return X
    # entirely-missing columns are rejected by validate() before this point
    means = np.nanmean(X, axis=0)
    if init == "mean":
        X[miss] = np.broadcast_to(means, X.shape)[miss]
    elif init == "random":
        if rng is None:
            raise ValueError("random initialisation needs an rng")
        sds = np.nanstd(X, axis=0)
        sds = np.where(np.isfinite(sds) & (sds > 0), sds, 1.0)
        fill = means + sds * rng.standard_normal(X.shape)
        X[miss] = fill[miss]
    else:
        raise ValueError(f"unknown init {init!r}")
    return X


def augmented_gibbs(
    d: Dataset,
    cfg: AnalysisConfig,
    rng: np.random.Generator,
    init: str = "mean",
    stats: dict | None = None,
) -> list[ImputationDraw]:
    """Sample J joint draws of (nu, completed X) given the observed covariates.

    Alternates an exact reference-posterior draw of nu on the current
    completion with a conditional draw of every missing cell; keeps every
    ``thin``-th iteration after ``burn_in``.
    """
    diag = validate(d, cfg, for_bf=False)
    if not diag.ok:
        raise ValidationError("; ".join(diag.fatal))
    if d.n <= d.p:
        raise DomainError(f"imputation needs n > p (n={d.n}, p={d.p})")
    miss = np.isnan(d.X)
    rows = np.flatnonzero(miss.any(axis=1))
    X = initial_completion(d, init, rng)
    draws: list[ImputationDraw] = []
    total = cfg.burn_in + cfg.draws * cfg.thin
    proposals = 0
    batch = 1
    for it in range(total):
        sampler = ReferencePosterior(X)
        params = sampler.draw(rng, batch)
        proposals += sampler.proposals
        # size the next proposal batch from the running acceptance rate
        batch = int(min(MAX_BATCH, max(1, math.ceil(1.5 * proposals / (it + 1)))))
        _impute_rows(X, rows, miss, params, rng)
        kept = it - cfg.burn_in + 1
        if kept > 0 and kept % cfg.thin == 0:
            Xc = X.copy()
            Xc.setflags(write=False)
            draws.append(ImputationDraw(params=params, x_completed=Xc, draw_index=len(draws)))
    if not np.isfinite(draws[-1].x_completed).all():
        raise DomainError("non-finite imputed values")
    if stats is not None:
        stats["proposals"] = proposals
        stats["iterations"] = total
        stats["acceptance_rate"] = total / proposals
    logger.debug("gibbs: %d iterations, %d proposals", total, proposals)
    return draws


def stack_draws(draws):
    """(mu, Sigma, X) arrays of shape (J,p), (J,p,p), (J,n,p)."""
    mu = np.stack([dr.params.mu for dr in draws])
    sigma = np.stack([dr.params.sigma for dr in draws])
    X = np.stack([dr.x_completed for dr in draws])
    return mu, sigma, X


def write_draws_csv(draws, d: Dataset, path) -> None:
    """Audit dump: draw index, mu, lower triangle of Sigma, imputed cells."""
    p = d.p
    miss_cells = np.argwhere(np.isnan(d.X))
    names = d.covariate_names
    header = ["draw_index"]
    header += [f"mu[{names[j]}]" for j in range(p)]
    low = np.tril_indices(p)
    header += [f"sigma[{names[i]},{names[j]}]" for i, j in zip(*low)]
    header += [f"x[{i},{names[j]}]" for i, j in miss_cells]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for dr in draws:
            row = [dr.draw_index]
            row += [repr(float(v)) for v in dr.params.mu]
            row += [repr(float(v)) for v in dr.params.sigma[low]]
            row += [repr(float(dr.x_completed[i, j])) for i, j in miss_cells]
            w.writerow(row)
