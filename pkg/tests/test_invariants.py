"""Randomised invariance properties of the Bayes factors and posteriors."""

import math

import numpy as np
from hypothesis import given, settings, strategies as st

from missbf.data import AnalysisConfig, Dataset, ModelId
from missbf.errormodel import ErrorCovSpec, imputed_error_log_bf, log_marginal_haar
from missbf.gprime import LogBF, imputed_gprime_log_bf, listwise_log_bf, log_bf_complete_gprior
from missbf.imputation import ImputationDraw, MvnParams, augmented_gibbs
from missbf.models import _log_priors, model_bits_matrix, posterior_over_models, summarize

CASES = settings(max_examples=200)
seeds = st.integers(0, 2**32 - 1)
scales = st.floats(1e-3, 1e3).flatmap(lambda c: st.sampled_from([c, -c]))
shifts = st.floats(-1e3, 1e3)


def close(a, b, tol):
    assert abs(a - b) <= tol * max(1.0, abs(a), abs(b)), (a, b)


def _problem(seed, n_lo=12, n_hi=40, p_hi=4):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_lo, n_hi))
    p = int(rng.integers(1, p_hi + 1))
    X = rng.normal(size=(n, p)) * rng.uniform(0.5, 3, size=p) + rng.normal(scale=2, size=p)
    y = 1.0 + X @ rng.normal(size=p) + rng.normal(size=n)
    return rng, y, X


def _draws(rng, X, J=4, shift=None):
    """Completions of X with a few cells perturbed plus random SPD Sigma."""
    n, p = X.shape
    out = []
    for j in range(J):
        Xc = X.copy()
        cells = rng.random((n, p)) < 0.1
        Xc[cells] += rng.normal(size=cells.sum())
        if shift is not None:
            Xc = Xc + shift
        A = rng.normal(size=(p, p))
        out.append(ImputationDraw(MvnParams.from_sigma(np.zeros(p), A @ A.T + np.eye(p)), Xc, j))
    return out


def _with_holes(rng, y, X):
    Xm = X.copy()
    Xm[rng.random(X.shape) < 0.1] = np.nan
    Xm[0] = X[0]
    return Dataset.from_arrays(y, Xm)


class TestLocationScale:
    @CASES
    @given(seeds, scales, shifts)
    def test_complete_gprior(self, seed, c, b):
        _, y, X = _problem(seed)
        close(log_bf_complete_gprior(c * y + b, X).value, log_bf_complete_gprior(y, X).value, 1e-8)

    @CASES
    @given(seeds, scales, shifts, st.floats(0.1, 10))
    def test_imputed_gprime(self, seed, c, b, g_prime):
        rng, y, X = _problem(seed)
        d = _with_holes(rng, y, X)
        draws = _draws(rng, X)
        gamma = ModelId((True,) * X.shape[1])
        a = imputed_gprime_log_bf(d, gamma, draws, g_prime).value
        t = imputed_gprime_log_bf(d.replace(y=c * d.y + b), gamma, draws, g_prime).value
        close(t, a, 1e-8)

    @CASES
    @given(seeds, scales, shifts)
    def test_listwise(self, seed, c, b):
        rng, y, X = _problem(seed, n_lo=25)
        d = _with_holes(rng, y, X)
        gamma = ModelId((True,) * X.shape[1])
        close(listwise_log_bf(d.replace(y=c * d.y + b), gamma).value, listwise_log_bf(d, gamma).value, 1e-8)

    @CASES
    @given(seeds, scales, shifts)
    def test_error_bf(self, seed, c, b):
        rng, y, X = _problem(seed)
        X = np.abs(X) + 0.5
        d = Dataset.from_arrays(y, X)
        p1, p2 = ErrorCovSpec.identity(), ErrorCovSpec.diag_from_covariate(0)
        a = imputed_error_log_bf(d, [0], p1, p2).value
        close(imputed_error_log_bf(d.replace(y=c * y + b), [0], p1, p2).value, a, 1e-8)

    @settings(max_examples=200)
    @given(seeds, scales, shifts)
    def test_full_pipeline(self, seed, c, b):
        # the covariate-only imputation never looks at y, so a shared seed gives shared draws
        rng, y, X = _problem(seed, p_hi=3)
        d = _with_holes(rng, y, X)
        cfg = AnalysisConfig(draws=5, burn_in=3, thin=1, seed=1, model_prior="uniform")
        s0 = posterior_over_models(d, cfg, augmented_gibbs(d, cfg, np.random.default_rng(seed)))
        d1 = d.replace(y=c * y + b)
        s1 = posterior_over_models(d1, cfg, augmented_gibbs(d1, cfg, np.random.default_rng(seed)))
        np.testing.assert_allclose(s1.probabilities, s0.probabilities, rtol=0, atol=1e-8)
        assert (s0.hpm, s0.mpm) == (s1.hpm, s1.mpm) or np.isclose(s0.inclusion, 0.5, atol=1e-6).any()


class TestColumnShift:
    @CASES
    @given(seeds, st.data())
    def test_complete_gprior(self, seed, data):
        _, y, X = _problem(seed)
        a = data.draw(st.lists(shifts, min_size=X.shape[1], max_size=X.shape[1]))
        close(log_bf_complete_gprior(y, X + a).value, log_bf_complete_gprior(y, X).value, 1e-10)

    @CASES
    @given(seeds, st.data(), st.floats(0.1, 10))
    def test_imputed_gprime(self, seed, data, g_prime):
        _, y, X = _problem(seed)
        a = np.array(data.draw(st.lists(shifts, min_size=X.shape[1], max_size=X.shape[1])))
        d = Dataset.from_arrays(y, X)
        gamma = ModelId((True,) * X.shape[1])
        base = imputed_gprime_log_bf(d, gamma, _draws(np.random.default_rng(seed), X), g_prime).value
        moved = imputed_gprime_log_bf(d, gamma, _draws(np.random.default_rng(seed), X, shift=a), g_prime).value
        close(moved, base, 1e-10)


class TestHaar:
    @CASES
    @given(seeds, scales, st.data())
    def test_marginal_ratio_invariant(self, seed, c, data):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(6, 30))
        k = int(rng.integers(1, 4))
        W = np.column_stack([np.ones(m), rng.normal(size=(m, k - 1))])
        y = rng.normal(size=m)
        psi1 = rng.uniform(0.2, 5, size=m)
        psi2 = rng.uniform(0.2, 5, size=m)
        bvec = np.array(data.draw(st.lists(shifts, min_size=k, max_size=k)))
        y2 = c * y + W @ bvec
        ref = log_marginal_haar(y, W, psi1) - log_marginal_haar(y, W, psi2)
        got = log_marginal_haar(y2, W, psi1) - log_marginal_haar(y2, W, psi2)
        close(got, ref, 1e-8)

    @CASES
    @given(seeds)
    def test_antisymmetry_exact(self, seed):
        rng, y, X = _problem(seed)
        X = np.abs(X) + 0.1
        Xm = X.copy()
        Xm[rng.random(X.shape) < 0.1] = np.nan
        d = Dataset.from_arrays(y, Xm)
        draws = _draws(rng, X, J=3)
        p1, p2 = ErrorCovSpec.identity(), ErrorCovSpec.diag_from_covariate(0)
        x1 = list(range(X.shape[1]))
        assert imputed_error_log_bf(d, x1, p1, p2, draws).value == \
            -imputed_error_log_bf(d, x1, p2, p1, draws).value


class TestNormalisation:
    @CASES
    @given(st.integers(1, 8), st.sampled_from(["uniform", "hier"]), seeds, st.floats(0.1, 300))
    def test_posterior_sums_to_one(self, p, prior, seed, spread):
        rng = np.random.default_rng(seed)
        bits = model_bits_matrix(p)
        lbf = rng.normal(scale=spread, size=bits.shape[0])
        lbf[0] = 0.0
        s = summarize(bits, [LogBF(v) for v in lbf], prior, "imputed")
        assert abs(math.fsum(s.probabilities) - 1.0) <= 1e-10
        np.testing.assert_allclose(s.inclusion, bits.T.astype(float) @ s.probabilities, atol=1e-12)

    @CASES
    @given(seeds, st.sampled_from(["uniform", "hier"]), st.sampled_from(["oracle", "imputed"]))
    def test_posterior_on_data(self, seed, prior, engine):
        _, y, X = _problem(seed)
        cfg = AnalysisConfig(model_prior=prior)
        s = posterior_over_models(Dataset.from_arrays(y, X), cfg, bf_engine=engine)
        assert abs(math.fsum(s.probabilities) - 1.0) <= 1e-10

    @CASES
    @given(st.integers(1, 15), st.sampled_from(["uniform", "hier"]), seeds)
    def test_prior_sums_to_one(self, p, prior, seed):
        # plain summation in a random order, so the bound does not lean on fsum
        w = np.exp(_log_priors(model_bits_matrix(p), prior))
        w = np.random.default_rng(seed).permutation(w)
        assert abs(float(np.sum(w)) - 1.0) <= 1e-12
