import warnings

import numpy as np
import pytest

from missbf.amputation import AmputationSpec, ampute, driver_score, global_missing_fraction
from missbf.data import Dataset
from missbf.exceptions import ConfigError, ValidationError


def _complete(n=200, p=10, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset.from_arrays(rng.normal(size=n), rng.normal(size=(n, p)))


class TestSpec:
    @pytest.mark.parametrize("kwargs", [
        dict(mechanism="MNAR", target_vars=(0,), per_var_prob=0.1),
        dict(mechanism="MCAR", target_vars=(0,), per_var_prob=1.0),
        dict(mechanism="MCAR", target_vars=(0,), per_var_prob=-0.1),
        dict(mechanism="MAR", target_vars=(0,), per_var_prob=0.1),
        dict(mechanism="MAR", target_vars=(0, 1), per_var_prob=0.1, driver_vars=(1,)),
        dict(mechanism="MCAR", target_vars=(0, 0), per_var_prob=0.1),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            AmputationSpec(**kwargs)

    def test_case_insensitive(self):
        assert AmputationSpec("mar", (1,), 0.2, (0,)).mechanism == "MAR"

    def test_incomplete_driver(self):
        d = _complete(20, 3)
        X = np.array(d.X)
        X[0, 0] = np.nan
        with pytest.raises(ValidationError):
            ampute(d.replace(X=X), AmputationSpec("MAR", (1,), 0.2, (0,)), np.random.default_rng(0))

    def test_out_of_range_column(self):
        with pytest.raises(ConfigError):
            ampute(_complete(20, 3), AmputationSpec("MCAR", (3,), 0.2), np.random.default_rng(0))


class TestMcar:
    def test_zero_prob_unchanged(self):
        d = _complete()
        out = ampute(d, AmputationSpec("MCAR", range(10), 0.0), np.random.default_rng(1))
        np.testing.assert_array_equal(out.X, d.X)

    @pytest.mark.parametrize("prob,target", [(0.05, 1 - 0.95**10), (0.10, 1 - 0.9**10)])
    def test_global_fraction(self, prob, target):
        d = _complete(n=100_000)
        out = ampute(d, AmputationSpec("MCAR", range(10), prob), np.random.default_rng(2))
        assert global_missing_fraction(out) == pytest.approx(target, abs=0.005)
        assert round(target, 3) in (0.401, 0.651)

    def test_response_untouched(self):
        d = _complete()
        out = ampute(d, AmputationSpec("MCAR", range(10), 0.5), np.random.default_rng(3))
        np.testing.assert_array_equal(out.y, d.y)


class TestMar:
    spec = AmputationSpec("MAR", (5, 6, 7, 8, 9), 0.2, (0, 1, 2, 3, 4))

    def test_zero_prob_unchanged(self):
        d = _complete()
        out = ampute(d, AmputationSpec("MAR", (5,), 0.0, (0,)), np.random.default_rng(1))
        np.testing.assert_array_equal(out.X, d.X)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("n", [37, 100, 251])
    def test_exact_count(self, seed, n):
        out = ampute(_complete(n), self.spec, np.random.default_rng(seed))
        frac = np.isnan(out.X).mean(axis=0)
        np.testing.assert_allclose(frac[5:], round(0.2 * n) / n, rtol=0, atol=0)
        assert not np.isnan(out.X[:, :5]).any()

    def test_driver_dependence(self):
        d = _complete(n=1000)
        out = ampute(d, self.spec, np.random.default_rng(4))
        score = driver_score(d.X, self.spec.driver_vars)
        for j in self.spec.target_vars:
            hit = np.isnan(out.X[:, j])
            assert score[hit].mean() > score.mean()

    def test_tiny_count_warns(self):
        d = _complete(n=10)
        with pytest.warns(UserWarning):
            out = ampute(d, AmputationSpec("MAR", (1,), 0.01, (0,)), np.random.default_rng(0))
        np.testing.assert_array_equal(out.X, d.X)

    def test_observed_cells_bit_identical(self):
        d = _complete()
        out = ampute(d, self.spec, np.random.default_rng(5))
        keep = ~np.isnan(out.X)
        np.testing.assert_array_equal(out.X.view(np.uint64)[keep], d.X.view(np.uint64)[keep])
        np.testing.assert_array_equal(out.y, d.y)

    def test_seeded_determinism(self):
        d = _complete()
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            a = ampute(d, self.spec, np.random.default_rng(9))
            b = ampute(d, self.spec, np.random.default_rng(9))
        np.testing.assert_array_equal(a.mask, b.mask)
