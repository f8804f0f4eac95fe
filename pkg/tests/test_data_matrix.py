import numpy as np
import pytest

from app.core.data_matrix import (
    DataMatrix,
    apply_standardizer,
    fit_standardizer,
    invert_standardizer,
    load_csv,
    make_fold_plan,
    parse_csv_text,
    to_csv_text,
    write_csv,
)
from app.core.errors import DataError, DimensionMismatchError
from app.core.rng import derive_seed, make_rng


class TestCsvIngestion:
    def test_empty_field_is_missing(self):
        m = parse_csv_text("a,b\n1,2\n3,\n")
        assert m.shape == (2, 2)
        assert m.observed.tolist() == [[True, True], [True, False]]
        assert m.values[1, 0] == 3.0
        assert np.isnan(m.values[1, 1])

    def test_target_column_resolved_by_name(self):
        m = parse_csv_text("a,b,y\n1,2,3\n", target_name="y")
        assert m.target_col == 2
        assert m.feature_cols.tolist() == [0, 1]

    def test_non_numeric_field_names_row_and_column(self):
        with pytest.raises(DataError, match=r"row 3, column 'a'"):
            parse_csv_text("a,b\n1,2\n3,4\nx,5\n")

    def test_unknown_target(self):
        with pytest.raises(DataError, match="target column"):
            parse_csv_text("a,b\n1,2\n", target_name="y")

    def test_single_column_rejected(self):
        with pytest.raises(DataError, match="at least 2 columns"):
            parse_csv_text("a\n1\n2\n")

    def test_header_only_rejected(self):
        with pytest.raises(DataError):
            parse_csv_text("a,b\n")

    def test_infinite_value_rejected(self):
        with pytest.raises(DataError, match="non-numeric"):
            parse_csv_text("a,b\n1,1e400\n")

    def test_extra_field_rejected(self):
        with pytest.raises(DataError, match="row 1 has 3 fields, header has 2"):
            parse_csv_text("a,b\n1,2,3\n4,5,6\n")

    def test_short_row_rejected(self):
        with pytest.raises(DataError, match="row 2 has 2 fields, header has 3"):
            parse_csv_text("a,b,c\n1,2,3\n4,5\n")

    def test_duplicate_header_rejected(self):
        with pytest.raises(DataError, match="duplicate column names"):
            parse_csv_text("a,b,a\n1,2,3\n")

    def test_trailing_empty_field_counts(self):
        m = parse_csv_text("a,b,c\n1,2,\n,,\n")
        assert m.observed.tolist() == [[True, True, False], [False, False, False]]

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_csv(tmp_path / "nope.csv")

    def test_metadata_lines_skipped(self):
        m = parse_csv_text("# seed=1 method=mean\na,b\n1,2\n")
        assert m.column_names == ("a", "b")
        assert m.values.tolist() == [[1.0, 2.0]]

    def test_write_then_load_is_bit_exact(self, tmp_path):
        rng = make_rng(3)
        values = rng.normal(size=(30, 4)) * np.array([1e-300, 1.0, 1e12, 1 / 3])
        observed = rng.random((30, 4)) > 0.2
        m = DataMatrix(values=values, observed=observed, column_names=("a", "b", "c", "d"))
        back = load_csv(write_csv(m, tmp_path / "out.csv", {"seed": 3}))
        assert np.array_equal(back.observed, m.observed)
        assert np.array_equal(back.values[m.observed], m.values[m.observed])

    def test_to_csv_text_writes_empty_fields(self, make_matrix):
        text = to_csv_text(make_matrix([[1, None], [None, 2.5]], names=["a", "b"]))
        assert text == "a,b\n1,\n,2.5\n"


class TestDataMatrix:
    def test_observed_cells_must_be_finite(self):
        with pytest.raises(DataError):
            DataMatrix(values=np.array([[np.inf, 1.0]]), observed=np.ones((1, 2), bool), column_names=("a", "b"))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            DataMatrix(values=np.zeros((2, 2)), observed=np.ones((2, 3), bool), column_names=("a", "b"))

    def test_values_are_read_only(self, make_matrix):
        m = make_matrix([[1, 2]])
        with pytest.raises(ValueError):
            m.values[0, 0] = 5.0

    def test_filled_uses_column_fill(self, make_matrix):
        m = make_matrix([[1, None], [None, 4]])
        np.testing.assert_array_equal(m.filled(np.array([7.0, 8.0])), [[1.0, 8.0], [7.0, 4.0]])


class TestStandardizer:
    def test_mean_and_population_std(self, make_matrix):
        p = fit_standardizer(make_matrix([[1, 5], [2, 5], [3, 5]]))
        np.testing.assert_allclose(p.means, [2.0, 5.0])
        np.testing.assert_allclose(p.stds, [np.sqrt(2 / 3), 0.0])

    def test_ignores_missing_cells(self, make_matrix):
        p = fit_standardizer(make_matrix([[1, 0], [None, 0], [3, 0]]))
        assert p.means[0] == 2.0
        assert p.stds[0] == 1.0

    def test_apply_and_constant_column(self, make_matrix):
        m = make_matrix([[1, 5], [2, 5], [3, 5]])
        z = apply_standardizer(m, fit_standardizer(m))
        np.testing.assert_allclose(z.values[:, 0], [-1.224744871391589, 0.0, 1.224744871391589])
        np.testing.assert_array_equal(z.values[:, 1], 0.0)

    def test_round_trip(self):
        from app.core.synthetic import random_matrix

        m = random_matrix(200, 5, seed=11, source_missing=0.1)
        p = fit_standardizer(m)
        back = invert_standardizer(apply_standardizer(m, p), p)
        obs = m.observed
        np.testing.assert_allclose(back.values[obs], m.values[obs], rtol=1e-12, atol=1e-12)

    def test_standardized_moments(self):
        from app.core.synthetic import random_matrix

        m = random_matrix(500, 4, seed=5)
        z = apply_standardizer(m, fit_standardizer(m))
        np.testing.assert_allclose(z.values.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.values.std(axis=0), 1.0, atol=1e-12)


class TestFoldPlan:
    def test_even_split(self):
        assert make_fold_plan(10, 5, seed=1).fold_sizes().tolist() == [2, 2, 2, 2, 2]

    def test_uneven_split(self):
        assert sorted(make_fold_plan(11, 5, seed=1).fold_sizes().tolist()) == [2, 2, 2, 2, 3]

    def test_partition_and_determinism(self):
        a = make_fold_plan(37, 4, seed=derive_seed(9, "folds"))
        b = make_fold_plan(37, 4, seed=derive_seed(9, "folds"))
        assert np.array_equal(a.assignments, b.assignments)
        rows = np.concatenate([a.test_indices(f) for f in range(4)])
        assert sorted(rows.tolist()) == list(range(37))
        for f in range(4):
            assert set(a.train_indices(f)).isdisjoint(a.test_indices(f))
            assert len(a.train_indices(f)) + len(a.test_indices(f)) == 37

    @pytest.mark.parametrize("n,k", [(10, 1), (3, 4)])
    def test_invalid(self, n, k):
        with pytest.raises(DataError):
            make_fold_plan(n, k, seed=0)
