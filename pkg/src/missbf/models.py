"""Exhaustive model space: priors, posterior probabilities and summaries."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .data import (
    AnalysisConfig,
    Dataset,
    ModelId,
    listwise_complete,
    observed_response_rows,
)
from .exceptions import ConfigError, DomainError, EmptyDatasetError, ValidationError
from .gprime import (
    GPrimeEngine,
    LogBF,
    check_skips,
    complete_gprior_log_bfs,
    response_design,
)
from .numerics import log_mean_exp, logsumexp

MAX_P = 20
ENGINES = ("imputed", "listwise", "oracle")


def model_bits_matrix(p: int) -> np.ndarray:
    """(2^p, p) boolean matrix; row m has bit j set iff (m >> j) & 1."""
    if p > MAX_P:
        raise ConfigError(f"exhaustive enumeration limited to p <= {MAX_P} (got p={p})")
    m = np.arange(2**p, dtype=np.int64)[:, None]
    return ((m >> np.arange(p)) & 1).astype(bool)


def enumerate_models(p: int) -> list[ModelId]:
    return [ModelId(tuple(row)) for row in model_bits_matrix(p)]


def log_binom(p: int, k) -> np.ndarray:
    k = np.asarray(k)
    return gammaln(p + 1) - gammaln(k + 1) - gammaln(p - k + 1)


def model_log_prior(gamma: ModelId, prior: str, p: int | None = None) -> float:
    """log p(gamma): ``uniform`` is 2^-p; ``hier`` gives each model size mass 1/(p+1)."""
    p = len(gamma.bits) if p is None else p
    k = gamma.p_gamma
    if k > p:
        raise ValueError("p_gamma exceeds p")
    if prior == "uniform":
        return -p * math.log(2.0)
    if prior == "hier":
        return -math.log(p + 1) - float(log_binom(p, k))
    raise ConfigError(f"unknown model prior {prior!r}")


def _log_priors(bits: np.ndarray, prior: str) -> np.ndarray:
    p = bits.shape[1]
    sizes = bits.sum(axis=1)
    if prior == "uniform":
        return np.full(bits.shape[0], -p * math.log(2.0))
    if prior == "hier":
        return -math.log(p + 1) - log_binom(p, sizes)
    raise ConfigError(f"unknown model prior {prior!r}")


@dataclass
class ModelEntry:
    model: ModelId
    log_bf: LogBF
    log_prior: float
    posterior_prob: float


@dataclass
class PosteriorSummary:
    models: list[ModelEntry]
    inclusion: np.ndarray
    hpm: ModelId
    mpm: ModelId
    normalizing_log_const: float | None
    engine: str = "imputed"
    variable_names: tuple[str, ...] = ()
    notes: list[str] = field(default_factory=list)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([m.posterior_prob for m in self.models])

    def prob_of(self, gamma: ModelId) -> float:
        for m in self.models:
            if m.model == gamma:
                return m.posterior_prob
        raise KeyError(str(gamma))

    def to_dict(self) -> dict:
        names = self.variable_names or tuple(f"x{j + 1}" for j in range(len(self.inclusion)))
        return {
            "engine": self.engine,
            "notes": list(self.notes),
            "variables": list(names),
            "inclusion": {nm: float(v) for nm, v in zip(names, self.inclusion)},
            "hpm": str(self.hpm),
            "mpm": str(self.mpm),
            "normalizing_log_const": self.normalizing_log_const,
            "models": [
                {
                    "bits": str(e.model),
                    "log_bf": e.log_bf.value,
                    "mc_std_error": e.log_bf.mc_std_error,
                    "j_used": e.log_bf.j_used,
                    "log_prior": e.log_prior,
                    "prob": e.posterior_prob,
                }
                for e in self.models
            ],
        }

    def write(self, out_dir, stem: str) -> None:
        out_dir = Path(out_dir)
        with (out_dir / f"{stem}.json").open("w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with (out_dir / f"{stem}_models.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bits", "log_bf", "mc_std_error", "log_prior", "prob"])
            for e in self.models:
                se = "" if e.log_bf.mc_std_error is None else repr(e.log_bf.mc_std_error)
                w.writerow([str(e.model), repr(e.log_bf.value), se, repr(e.log_prior), repr(e.posterior_prob)])
        names = self.variable_names or tuple(f"x{j + 1}" for j in range(len(self.inclusion)))
        with (out_dir / f"{stem}_variables.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variable", "inclusion", "in_mpm"])
            for j, nm in enumerate(names):
                w.writerow([nm, repr(float(self.inclusion[j])), int(self.mpm.bits[j])])


def median_probability_model(inclusion) -> ModelId:
    inclusion = np.asarray(inclusion, dtype=np.float64)
    return ModelId(tuple(bool(v > 0.5) for v in inclusion))


def snr(inclusion, true_idx, spurious_idx) -> float:
    """Smallest true-covariate inclusion over largest spurious inclusion."""
    inclusion = np.asarray(inclusion, dtype=np.float64)
    true_idx, spurious_idx = list(true_idx), list(spurious_idx)
    if not true_idx or not spurious_idx or set(true_idx) & set(spurious_idx):
        raise ValueError("true and spurious index sets must be nonempty and disjoint")
    lo = float(inclusion[true_idx].min())
    hi = float(inclusion[spurious_idx].max())
    if hi == 0.0:
        return math.inf
    return lo / hi


def _hpm(bits: np.ndarray, probs: np.ndarray) -> ModelId:
    best = probs.max()
    cands = np.flatnonzero(probs == best)
    # ties: fewer covariates, then lexicographic on the bit string
    key = min(cands, key=lambda m: (bits[m].sum(), "".join("1" if b else "0" for b in bits[m])))
    return ModelId(tuple(bits[key]))


def summarize(bits, log_bfs: list[LogBF], prior: str, engine: str, names=(), notes=None,
              probs=None) -> PosteriorSummary:
    """Normalise log BF + log prior over the enumerated models.

    ``probs`` overrides the posterior probabilities (used when they are
    averaged rather than derived from the Bayes factors).
    """
    bits = np.asarray(bits, dtype=bool)
    log_prior = _log_priors(bits, prior)
    log_norm = None
    if probs is None:
        lw = np.array([b.value for b in log_bfs]) + log_prior
        log_norm = logsumexp(lw)
        probs = np.exp(lw - log_norm)
    probs = np.asarray(probs, dtype=np.float64)
    inclusion = bits.T.astype(np.float64) @ probs
    entries = [
        ModelEntry(ModelId(tuple(bits[m])), log_bfs[m], float(log_prior[m]), float(probs[m]))
        for m in range(bits.shape[0])
    ]
    return PosteriorSummary(
        models=entries,
        inclusion=inclusion,
        hpm=_hpm(bits, probs),
        mpm=median_probability_model(inclusion),
        normalizing_log_const=log_norm,
        engine=engine,
        variable_names=tuple(names),
        notes=list(notes or []),
    )


def _size_groups(bits: np.ndarray):
    sizes = bits.sum(axis=1)
    for k in range(bits.shape[1] + 1):
        members = np.flatnonzero(sizes == k)
        if members.size:
            idx = np.array([np.flatnonzero(bits[m]) for m in members], dtype=np.intp).reshape(members.size, k)
            yield k, members, idx


def _imputed_log_bfs(d: Dataset, cfg: AnalysisConfig, draws, bits) -> list[LogBF]:
    y0, X_stack, sigma_stack = response_design(d, draws)
    engine = GPrimeEngine(y0, X_stack, sigma_stack, cfg.g_prime)
    J = engine.J
    out: list[LogBF | None] = [None] * bits.shape[0]

    def run(group):
        k, members, idx = group
        if k == 0:
            return members, np.zeros(members.size), np.zeros(members.size), np.zeros(members.size, int)
        try:
            value, se, skipped = engine.log_bfs(idx)
        except DomainError as exc:
            raise DomainError(f"model {ModelId(tuple(bits[members[0]]))}: {exc}") from None
        return members, value, se, skipped

    groups = list(_size_groups(bits))
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, groups))
    else:
        results = [run(g) for g in groups]
    for members, value, se, skipped in results:
        for i, m in enumerate(members):
            gamma = ModelId(tuple(bits[m]))
            check_skips(int(skipped[i]), J, gamma)
            out[m] = LogBF(float(value[i]), float(se[i]), J - int(skipped[i]), int(skipped[i]))
    return out


def _complete_log_bfs(y, X, bits, g=None) -> list[LogBF]:
    out: list[LogBF | None] = [None] * bits.shape[0]
    for k, members, idx in _size_groups(bits):
        if k > 0 and y.size <= k + 1:
            raise DomainError(
                f"model {ModelId(tuple(bits[members[0]]))}: {y.size} rows cannot support "
                f"{k} covariates"
            )
        vals = complete_gprior_log_bfs(y, X, idx, g=g)[0]
        for i, m in enumerate(members):
            out[m] = LogBF(float(vals[i]))
    return out


def posterior_over_models(
    d: Dataset,
    cfg: AnalysisConfig,
    draws=None,
    bf_engine: str = "imputed",
) -> PosteriorSummary:
    """Posterior over all 2^p models with Bayes factors from ``bf_engine``.

    ``imputed`` averages the g'-ratio over the shared ``draws`` (and falls
    back to the complete-data g-prior with g = n0 when no covariate cell
    is missing);
    ``listwise`` applies the g-prior (g = rows kept) after listwise
    deletion; ``oracle`` applies it (g = n) to complete data.
    """
    if bf_engine not in ENGINES:
        raise ConfigError(f"unknown engine {bf_engine!r}")
    bits = model_bits_matrix(d.p)
    notes = []
    if bf_engine == "imputed" and not d.has_missing_covariates:
        # nothing to impute: Sigma = sample covariance reproduces the g-prior
        rows = observed_response_rows(d)
        log_bfs = _complete_log_bfs(d.y[rows], d.X[rows], bits, g=rows.size)
        notes.append("no missing covariates: complete-data g-prior with g = n0")
    elif bf_engine == "imputed":
        if not draws:
            raise ValueError("the imputed engine needs imputation draws")
        log_bfs = _imputed_log_bfs(d, cfg, draws, bits)
    elif bf_engine == "listwise":
        lc = listwise_complete(d)
        log_bfs = _complete_log_bfs(lc.y, lc.X, bits, g=lc.n)
    else:
        if not d.is_complete:
            raise ValidationError("the oracle engine needs a complete dataset")
        log_bfs = _complete_log_bfs(d.y, d.X, bits, g=d.n)
    return summarize(bits, log_bfs, cfg.model_prior, bf_engine, d.covariate_names, notes=notes)


def evenly_spaced(draws, m: int):
    J = len(draws)
    if m > J:
        raise ConfigError(f"asked for {m} imputations from {J} draws")
    picks = np.linspace(0, J - 1, m).round().astype(int)
    return [draws[i] for i in picks]


def impute_then_select_baseline(
    d: Dataset,
    m_imputations: int,
    cfg: AnalysisConfig,
    draws=None,
    rng: np.random.Generator | None = None,
) -> PosteriorSummary:
    """Average of complete-data g-prior posteriors over imputed datasets.

    A heuristic comparison baseline.  Completions come from the
    covariate-only imputation model; each completed dataset gets the
    g-prior Bayes factor with g = n0.  When ``draws`` are supplied,
    ``m_imputations`` evenly spaced draws are reused; otherwise a chain
    is run with ``rng``.
    """
    from .imputation import augmented_gibbs

    if m_imputations < 2:
        raise ConfigError("impute-then-select needs at least 2 imputations")
    if draws is None:
        if rng is None:
            raise ValueError("need draws or an rng")
        sub_cfg = AnalysisConfig(
            g_prime=cfg.g_prime, draws=m_imputations, burn_in=cfg.burn_in,
            thin=cfg.thin, seed=cfg.seed, model_prior=cfg.model_prior,
        )
        picked = augmented_gibbs(d, sub_cfg, rng)
    else:
        picked = evenly_spaced(draws, m_imputations)
    rows = observed_response_rows(d)
    if rows.size == 0:
        raise EmptyDatasetError("no observed responses")
    y0 = d.y[rows]
    X_stack = np.stack([dr.x_completed[rows] for dr in picked])
    bits = model_bits_matrix(d.p)
    log_prior = _log_priors(bits, cfg.model_prior)
    lbf = np.zeros((m_imputations, bits.shape[0]))
    for k, members, idx in _size_groups(bits):
        if k == 0:
            continue
        if y0.size <= k + 1:
            raise DomainError(f"model {ModelId(tuple(bits[members[0]]))}: too few rows")
        lbf[:, members] = complete_gprior_log_bfs(y0, X_stack, idx, g=y0.size)
    lw = lbf + log_prior
    lw -= lw.max(axis=1, keepdims=True)
    probs = np.exp(lw)
    probs /= probs.sum(axis=1, keepdims=True)
    mean_probs = probs.mean(axis=0)
    value, se = log_mean_exp(lbf, axis=0)
    log_bfs = [LogBF(float(value[m]), float(se[m]), m_imputations) for m in range(bits.shape[0])]
    return summarize(
        bits, log_bfs, cfg.model_prior, "its", d.covariate_names,
        notes=["heuristic impute-then-select baseline: probabilities averaged over "
               f"{m_imputations} completed datasets"],
        probs=mean_probs,
    )
