import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from missbf.data import (
    AnalysisConfig,
    Dataset,
    ModelId,
    global_missing_fraction,
    listwise_complete,
    load_csv,
    observed_response_rows,
    validate,
    write_csv,
)
from missbf.exceptions import ConfigError, EmptyDatasetError, ParseError, SchemaError


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_empty_cell_marks_one_missing(self, tmp_path):
        path = _write(tmp_path, "x1,x2,y\n1,2,3\n,5,6\n7,8,9\n")
        d = load_csv(path, "y")
        assert d.mask[:, 0].sum() == 1
        assert d.mask.sum() == 1
        assert d.mask[1, 0] == 1

    def test_na_response(self, tmp_path):
        path = _write(tmp_path, "x1,y\n1,2\n3,NA\n5,nan\n7,8\n")
        d = load_csv(path, "y")
        # row 2 of the file is index 1
        assert d.mask[1, d.p] == 1
        assert d.mask[2, d.p] == 1
        assert d.mask[:, :d.p].sum() == 0

    def test_missing_tokens_case_insensitive(self, tmp_path):
        path = _write(tmp_path, "a,y\nNa,1\nNAN,2\n  ,3\n4,4\n")
        d = load_csv(path, "y")
        assert np.isnan(d.X[:3, 0]).all()

    def test_unparsable_token_names_row_and_column(self, tmp_path):
        path = _write(tmp_path, "x1,x2,y\n1,2,3\n4,abc,6\n")
        with pytest.raises(ParseError) as err:
            load_csv(path, "y")
        assert err.value.row == 2
        assert err.value.column == "x2"
        assert "abc" in str(err.value)

    def test_duplicate_columns(self, tmp_path):
        path = _write(tmp_path, "x,x,y\n1,2,3\n")
        with pytest.raises(SchemaError):
            load_csv(path, "y")

    def test_missing_response_column(self, tmp_path):
        path = _write(tmp_path, "x,z\n1,2\n")
        with pytest.raises(SchemaError):
            load_csv(path, "y")

    def test_infinite_token_rejected(self, tmp_path):
        path = _write(tmp_path, "x,y\ninf,2\n")
        with pytest.raises(ParseError):
            load_csv(path, "y")

    def test_response_removed_in_file_order(self, tmp_path):
        path = _write(tmp_path, "b,y,a\n1,2,3\n4,5,6\n")
        d = load_csv(path, "y")
        assert d.covariate_names == ("b", "a")
        np.testing.assert_array_equal(d.X, [[1, 3], [4, 6]])
        np.testing.assert_array_equal(d.y, [2, 5])

    def test_no_data_rows(self, tmp_path):
        path = _write(tmp_path, "x,y\n")
        with pytest.raises(EmptyDatasetError):
            load_csv(path, "y")


class TestRoundTrip:
    @given(
        arrays(np.float64, (7, 3), elements=st.floats(-1e300, 1e300, allow_nan=False)),
        st.lists(st.booleans(), min_size=21, max_size=21),
    )
    def test_write_then_load_is_bit_exact(self, tmp_path_factory, values, holes):
        X = values.copy()
        X[np.array(holes).reshape(7, 3)] = np.nan
        d = Dataset.from_arrays(X[:, 2], X[:, :2])
        path = tmp_path_factory.mktemp("rt") / "d.csv"
        write_csv(d, path)
        back = load_csv(path, "y")
        np.testing.assert_array_equal(back.mask, d.mask)
        np.testing.assert_array_equal(back.X.view(np.uint64)[~np.isnan(d.X)],
                                      d.X.view(np.uint64)[~np.isnan(d.X)])
        np.testing.assert_array_equal(back.y[~np.isnan(d.y)], d.y[~np.isnan(d.y)])


class TestDataset:
    def test_mask_tracks_nan(self):
        d = Dataset.from_arrays([1.0, np.nan], [[np.nan, 1.0], [2.0, 3.0]])
        np.testing.assert_array_equal(d.mask, [[1, 0, 0], [0, 0, 1]])

    def test_immutable(self):
        d = Dataset.from_arrays([1.0, 2.0], [[1.0], [2.0]])
        with pytest.raises(ValueError):
            d.X[0, 0] = 5.0

    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError):
            Dataset(y=[1.0], X=[[1.0]], names=("a", "a"))

    def test_needs_rows_and_columns(self):
        with pytest.raises(SchemaError):
            Dataset(y=np.zeros(2), X=np.zeros((2, 0)), names=("y",))


class TestObservedResponseRows:
    def test_no_missing(self):
        d = Dataset.from_arrays(np.arange(5.0), np.ones((5, 1)))
        np.testing.assert_array_equal(observed_response_rows(d), [0, 1, 2, 3, 4])

    def test_rows_1_and_3_missing(self):
        d = Dataset.from_arrays([1.0, np.nan, 2.0, np.nan], np.ones((4, 1)))
        np.testing.assert_array_equal(observed_response_rows(d), [0, 2])

    def test_all_missing(self):
        d = Dataset.from_arrays([np.nan, np.nan], np.ones((2, 1)))
        assert observed_response_rows(d).size == 0


class TestListwise:
    def test_complete_is_identity(self, rng):
        d = Dataset.from_arrays(rng.normal(size=6), rng.normal(size=(6, 2)))
        lc = listwise_complete(d)
        np.testing.assert_array_equal(lc.X, d.X)
        np.testing.assert_array_equal(lc.y, d.y)

    def test_two_incomplete_rows(self, rng):
        X = rng.normal(size=(10, 3))
        X[2, 0] = np.nan
        X[7, 2] = np.nan
        lc = listwise_complete(Dataset.from_arrays(rng.normal(size=10), X))
        assert lc.n == 8
        assert lc.mask.sum() == 0

    def test_no_complete_rows(self):
        X = np.array([[np.nan, 1.0], [1.0, np.nan]])
        with pytest.raises(EmptyDatasetError):
            listwise_complete(Dataset.from_arrays([1.0, 2.0], X))

    @given(st.lists(st.lists(st.booleans(), min_size=3, max_size=3), min_size=2, max_size=12))
    def test_row_count(self, holes):
        holes = np.array(holes)
        X = np.where(holes[:, :2], np.nan, 1.0)
        y = np.where(holes[:, 2], np.nan, 2.0)
        d = Dataset.from_arrays(y, X)
        bad = holes.any(axis=1).sum()
        if bad == len(holes):
            with pytest.raises(EmptyDatasetError):
                listwise_complete(d)
        else:
            lc = listwise_complete(d)
            assert lc.n == len(holes) - bad
            assert not lc.mask.any()


class TestValidate:
    def test_complete_has_no_flags(self, rng):
        d = Dataset.from_arrays(rng.normal(size=8), rng.normal(size=(8, 2)))
        diag = validate(d)
        assert diag.ok and not diag.warnings
        assert diag.global_missing_fraction == 0.0

    def test_entirely_missing_column(self, rng):
        X = rng.normal(size=(8, 3))
        X[:, 2] = np.nan
        diag = validate(Dataset.from_arrays(rng.normal(size=8), X))
        assert not diag.ok
        assert diag.missing_columns == ["x3"]
        assert any("x3" in f for f in diag.fatal)

    def test_constant_column_fatal_only_for_bf(self, rng):
        X = rng.normal(size=(8, 2))
        X[:, 1] = 4.0
        d = Dataset.from_arrays(rng.normal(size=8), X)
        assert not validate(d).ok
        assert validate(d, for_bf=False).ok

    def test_too_few_responses(self):
        d = Dataset.from_arrays([1.0, 2.0, np.nan], [[1.0], [2.0], [3.0]])
        assert not validate(d).ok

    def test_global_fraction_mcar_05(self):
        rng = np.random.default_rng(1)
        n = 200_000
        X = rng.normal(size=(n, 10))
        X[rng.random((n, 10)) < 0.05] = np.nan
        diag = validate(Dataset.from_arrays(rng.normal(size=n), X))
        assert diag.global_missing_fraction == pytest.approx(1 - 0.95**10, abs=0.005)
        assert diag.ok


class TestGlobalMissingFraction:
    def test_cases(self):
        X = np.ones((10, 2))
        assert global_missing_fraction(Dataset.from_arrays(np.ones(10), X)) == 0.0
        X[[0, 3, 5, 9], [0, 1, 1, 0]] = np.nan
        assert global_missing_fraction(Dataset.from_arrays(np.ones(10), X)) == pytest.approx(0.4)
        X = np.ones((3, 2))
        X[:, 0] = np.nan
        assert global_missing_fraction(Dataset.from_arrays(np.ones(3), X)) == 1.0


class TestModelIdAndConfig:
    def test_model_id(self):
        m = ModelId.from_indices([0, 2], 4)
        assert m.p_gamma == 2
        assert str(m) == "1010"
        np.testing.assert_array_equal(m.indices, [0, 2])
        assert ModelId.null(3).is_null

    @pytest.mark.parametrize("kwargs", [
        {"g_prime": 0.0}, {"g_prime": math.inf}, {"draws": 0}, {"thin": 0},
        {"burn_in": -1}, {"model_prior": "beta"}, {"threads": 0}, {"seed": -1},
    ])
    def test_bad_config(self, kwargs):
        with pytest.raises(ConfigError):
            AnalysisConfig(**kwargs)

    def test_defaults(self):
        cfg = AnalysisConfig()
        assert (cfg.g_prime, cfg.draws, cfg.burn_in, cfg.thin) == (1.0, 1000, 500, 5)
