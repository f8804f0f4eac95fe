import logging
from collections import Counter

import numpy as np
import pytest

from app.core.base_imputers import (
    ImputerKind,
    ImputerSpec,
    KNNImputer,
    MatrixFactorizationImputer,
    default_roster,
    fit_imputer,
    gbt_impute_fit,
    knn_impute_cell,
    mf_fit,
)
from app.core.data_matrix import DataMatrix, apply_standardizer, fit_standardizer
from app.core.errors import DimensionMismatchError, ImputerConfigError
from app.core.masking import apply_mcar_mask
from app.core.rng import derive_seed, make_rng
from app.core.synthetic import duplicate_column_matrix, low_rank_matrix, random_matrix

SMALL = {
    ImputerKind.KNN: {"k": 3},
    ImputerKind.GBT: {"trees": 10},
    ImputerKind.MF: {"epochs": 20},
    ImputerKind.AUTOENCODER: {"epochs": 5},
    ImputerKind.GAIN: {"iterations": 20},
}


def _spec(kind, **hyper):
    return ImputerSpec(kind=kind, hyperparameters={**SMALL.get(kind, {}), **hyper})


def _hidden_rmse(done: DataMatrix, mask) -> float:
    rows, cols, truth = mask.cells()
    return float(np.sqrt(np.mean((done.values[rows, cols] - truth) ** 2)))


class TestImputerSpec:
    def test_defaults_and_overrides(self):
        spec = ImputerSpec(kind=ImputerKind.KNN, hyperparameters={"k": 7})
        assert spec.get("k") == 7
        assert ImputerSpec(kind=ImputerKind.GBT).get("trees") == 100
        assert spec.label == "KNN"

    def test_unknown_key(self):
        with pytest.raises(ImputerConfigError, match="unknown hyperparameter"):
            ImputerSpec(kind=ImputerKind.KNN, hyperparameters={"kk": 3})

    @pytest.mark.parametrize("hyper", [{"k": 0}, {"k": 2.5}, {"k": float("nan")}])
    def test_invalid_values(self, hyper):
        with pytest.raises(ImputerConfigError):
            ImputerSpec(kind=ImputerKind.KNN, hyperparameters=hyper)

    def test_hint_rate_bounds(self):
        ImputerSpec(kind=ImputerKind.GAIN, hyperparameters={"hint_rate": 0.0})
        with pytest.raises(ImputerConfigError):
            ImputerSpec(kind=ImputerKind.GAIN, hyperparameters={"hint_rate": 1.5})

    def test_mf_epochs_may_be_zero(self):
        assert ImputerSpec(kind=ImputerKind.MF, hyperparameters={"epochs": 0}).get("epochs") == 0
        with pytest.raises(ImputerConfigError):
            ImputerSpec(kind=ImputerKind.AUTOENCODER, hyperparameters={"epochs": 0})

    def test_with_seed_keeps_pinned_seed(self):
        pinned = ImputerSpec(kind=ImputerKind.MF, hyperparameters={"seed": 3})
        assert pinned.with_seed(9).seed == 3
        assert ImputerSpec(kind=ImputerKind.MF).with_seed(9).seed == 9

    def test_seed_is_an_exact_integer(self):
        seed = derive_seed(42, 0, "mf")
        spec = ImputerSpec(kind=ImputerKind.MF).with_seed(seed)
        assert spec.seed == seed and isinstance(spec.seed, int)
        assert "seed" not in spec.hyperparameters
        assert ImputerSpec.model_validate(spec.model_dump(mode="json")).seed == seed

    def test_seed_hyperparameter_moves_to_seed_field(self):
        spec = ImputerSpec(kind=ImputerKind.KNN, hyperparameters={"k": 3, "seed": 7.0})
        assert spec.random_seed == 7
        assert spec.hyperparameters == {"k": 3.0}

    @pytest.mark.parametrize("seed", [-1, 2.5, float("inf")])
    def test_invalid_seed(self, seed):
        with pytest.raises(ImputerConfigError):
            ImputerSpec(kind=ImputerKind.KNN, hyperparameters={"seed": seed})

    def test_default_roster_order(self):
        assert [s.kind.value for s in default_roster()] == [
            "mean", "median", "mode", "knn", "gbt", "mf", "autoencoder", "gain",
        ]


class TestContract:
    """Every imputer keeps observed cells and returns finite values."""

    @pytest.mark.parametrize("kind", list(ImputerKind))
    def test_observed_cells_preserved(self, kind):
        m = random_matrix(40, 5, seed=21, source_missing=0.2, target=False)
        z = apply_standardizer(m, fit_standardizer(m))
        done = fit_imputer(_spec(kind, seed=1), z).transform(z)
        assert done.is_complete
        assert np.isfinite(done.values).all()
        assert np.array_equal(done.values[z.observed], z.values[z.observed])

    @pytest.mark.parametrize("kind", list(ImputerKind))
    def test_complete_input_unchanged(self, kind):
        train = random_matrix(30, 4, seed=2, source_missing=0.2, target=False)
        complete = random_matrix(10, 4, seed=3, target=False)
        out = fit_imputer(_spec(kind, seed=1), train).transform(complete)
        assert np.array_equal(out.values, complete.values)

    @pytest.mark.parametrize("kind", list(ImputerKind))
    def test_deterministic(self, kind):
        m = random_matrix(30, 4, seed=5, source_missing=0.2, target=False)
        a = fit_imputer(_spec(kind, seed=4), m).transform(m)
        b = fit_imputer(_spec(kind, seed=4), m).transform(m)
        assert np.array_equal(a.values, b.values)

    def test_width_mismatch(self):
        f = fit_imputer(_spec(ImputerKind.MEAN), random_matrix(10, 4, seed=1, target=False))
        with pytest.raises(DimensionMismatchError):
            f.transform(random_matrix(10, 3, seed=1, source_missing=0.3, target=False))


class TestColumnStatistics:
    def test_mean(self, make_matrix):
        m = make_matrix([[1, 0], [2, 0], [None, 0], [3, 0]])
        assert fit_imputer(_spec(ImputerKind.MEAN), m).transform(m).values[2, 0] == 2.0

    def test_median_lower_middle(self, make_matrix):
        m = make_matrix([[1, 0], [2, 0], [100, 0], [None, 0], [50, 0]])
        assert fit_imputer(_spec(ImputerKind.MEDIAN), m).transform(m).values[3, 0] == 2.0

    def test_mode_smallest_on_tie(self, make_matrix):
        m = make_matrix([[1, 0], [1, 0], [2, 0], [2, 0], [None, 0]])
        assert fit_imputer(_spec(ImputerKind.MODE), m).transform(m).values[4, 0] == 1.0

    def test_empty_column_imputes_zero(self, make_matrix, caplog):
        m = make_matrix([[1, None], [2, None]])
        with caplog.at_level(logging.WARNING):
            done = fit_imputer(_spec(ImputerKind.MEAN), m).transform(m)
        assert done.values[:, 1].tolist() == [0.0, 0.0]
        assert "no observed cells" in caplog.text

    def test_against_brute_force(self):
        rng = make_rng(99)
        for _ in range(1000):
            size = int(rng.integers(1, 8))
            column = rng.integers(0, 4, size=size).astype(float)
            m = DataMatrix(
                values=np.append(column, np.nan)[:, None],
                observed=np.append(np.ones(size, bool), False)[:, None],
                column_names=("c",),
            )
            mean = fit_imputer(_spec(ImputerKind.MEAN), m).transform(m).values[-1, 0]
            median = fit_imputer(_spec(ImputerKind.MEDIAN), m).transform(m).values[-1, 0]
            mode = fit_imputer(_spec(ImputerKind.MODE), m).transform(m).values[-1, 0]

            counts = Counter(column.tolist())
            top = max(counts.values())
            assert mean == pytest.approx(sum(column) / size, abs=1e-12)
            assert median == sorted(column)[(size - 1) // 2]
            assert mode == min(v for v, c in counts.items() if c == top)


def _oracle_knn(train: DataMatrix, query: DataMatrix, row: int, col: int, k: int) -> float:
    d = train.n_cols
    candidates = []
    for r in range(train.n_rows):
        if not train.observed[r, col]:
            continue
        shared = [j for j in range(d) if train.observed[r, j] and query.observed[row, j]]
        if not shared:
            continue
        sq = sum((train.values[r, j] - query.values[row, j]) ** 2 for j in shared)
        candidates.append((np.sqrt(d / len(shared) * sq), r))
    if not candidates:
        obs = train.values[train.observed[:, col], col]
        return float(sum(obs) / len(obs)) if len(obs) else 0.0
    chosen = sorted(r for _, r in sorted(candidates)[:k])
    return float(sum(train.values[r, col] for r in chosen) / len(chosen))


class TestKNN:
    def test_single_neighbour(self, make_matrix):
        train = make_matrix([[0, 0, 1], [10, 10, 9]])
        spec = _spec(ImputerKind.KNN, k=1)
        query = make_matrix([[1, 1, None]])
        assert fit_imputer(spec, train).transform(query).values[0, 2] == 1.0

    def test_equidistant_pair_averaged(self, make_matrix):
        train = make_matrix([[0, 1], [2, 3]])
        f = fit_imputer(_spec(ImputerKind.KNN, k=2), train)
        assert knn_impute_cell(f, make_matrix([[1, None]]), 0, 1) == 2.0

    def test_no_shared_coordinates_falls_back_to_mean(self, make_matrix):
        train = make_matrix([[1, None], [None, 4], [None, 6]])
        f = fit_imputer(_spec(ImputerKind.KNN, k=1), train)
        assert f.transform(make_matrix([[3, None]])).values[0, 1] == 5.0

    def test_against_exhaustive_search(self):
        rng = make_rng(314)
        for trial in range(200):
            n, d = int(rng.integers(2, 9)), int(rng.integers(2, 5))
            k = int(rng.integers(1, 4))
            train = DataMatrix(
                values=rng.normal(size=(n, d)),
                observed=rng.random((n, d)) > 0.25,
                column_names=tuple(f"c{j}" for j in range(d)),
            )
            query = DataMatrix(
                values=rng.normal(size=(3, d)),
                observed=rng.random((3, d)) > 0.4,
                column_names=train.column_names,
            )
            f = fit_imputer(_spec(ImputerKind.KNN, k=k), train)
            assert isinstance(f, KNNImputer)
            done = f.transform(query)
            for i, j in zip(*np.nonzero(~query.observed)):
                expected = _oracle_knn(train, query, i, j, k)
                assert done.values[i, j] == pytest.approx(expected, rel=1e-12, abs=1e-12), trial


class TestMatrixFactorization:
    def test_recovers_rank_one(self):
        m = low_rank_matrix(20, 5, rank=1, seed=12)
        z = apply_standardizer(m, fit_standardizer(m))
        masked, mask = apply_mcar_mask(z, 0.1, seed=3, exclude_target=False)
        spec = ImputerSpec(kind=ImputerKind.MF, hyperparameters={
            "rank": 2, "reg": 0.001, "lr": 0.02, "epochs": 500, "seed": 1,
        })
        done = fit_imputer(spec, masked).transform(masked)
        assert _hidden_rmse(done, mask) < 0.1

    def test_zero_epochs(self):
        m = random_matrix(20, 4, seed=3, source_missing=0.2, target=False)
        spec = ImputerSpec(kind=ImputerKind.MF, hyperparameters={"epochs": 0})
        done = fit_imputer(spec, m).transform(m)
        assert np.isfinite(done.values).all()

    def test_one_observed_cell_per_column(self):
        observed = np.zeros((10, 4), dtype=bool)
        for j in range(4):
            observed[j, j] = True
        m = DataMatrix(values=np.arange(40.0).reshape(10, 4), observed=observed, column_names=("a", "b", "c", "d"))
        done = fit_imputer(_spec(ImputerKind.MF), m).transform(m)
        assert np.isfinite(done.values).all()

    def test_loss_decreases(self):
        m = random_matrix(40, 5, seed=8, source_missing=0.1, target=False)
        z = apply_standardizer(m, fit_standardizer(m))
        factors = mf_fit(z, rank=3, reg=0.1, epochs=50, lr=0.01, seed=2)
        assert len(factors.loss_history) == 51
        assert factors.loss_history[-1] <= factors.loss_history[0]

    def test_fold_in_for_new_rows(self):
        train = random_matrix(30, 4, seed=1, source_missing=0.2, target=False)
        f = fit_imputer(_spec(ImputerKind.MF), train)
        assert isinstance(f, MatrixFactorizationImputer)
        other = random_matrix(5, 4, seed=2, source_missing=0.3, target=False)
        assert np.isfinite(f.transform(other).values).all()

    def test_default_rank_fits_short_wide_data(self):
        m = random_matrix(4, 12, seed=3, source_missing=0.2, target=False)
        f = fit_imputer(_spec(ImputerKind.MF), m)
        assert f.factors.U.shape == (4, 4)
        done = f.transform(m)
        assert done.observed.all() and np.isfinite(done.values).all()

    def test_rank_out_of_range(self):
        with pytest.raises(ImputerConfigError):
            mf_fit(random_matrix(10, 3, seed=0, target=False), rank=4, reg=0.1, epochs=1, lr=0.01, seed=0)


class TestGBT:
    def test_duplicate_column(self):
        m = duplicate_column_matrix(1000, 4, seed=6)
        hidden = np.zeros(m.shape, dtype=bool)
        hidden[:, 1] = make_rng(1).random(m.n_rows) < 0.1
        masked = m.with_values(m.values, ~hidden)
        spec = ImputerSpec(kind=ImputerKind.GBT, hyperparameters={"trees": 50, "depth": 3, "lr": 0.3})
        done = fit_imputer(spec, masked).transform(masked)
        err = done.values[hidden] - m.values[hidden]
        assert np.sqrt(np.mean(err ** 2)) < 0.05

    def test_single_training_row(self, make_matrix):
        train = make_matrix([[1, 2, 3], [4, None, 6]])
        f = fit_imputer(_spec(ImputerKind.GBT), train)
        done = f.transform(make_matrix([[7, None, 9], [0, None, 0]]))
        assert done.values[:, 1].tolist() == [2.0, 2.0]

    def test_unobserved_column_imputes_zero(self, make_matrix):
        m = make_matrix([[1, None], [2, None], [3, None]])
        done = fit_imputer(_spec(ImputerKind.GBT), m).transform(m)
        assert done.values[:, 1].tolist() == [0.0, 0.0, 0.0]

    def test_models_only_for_columns_with_gaps(self, make_matrix):
        train = make_matrix([[1, 2, None], [2, None, 5], [3, 6, 7], [4, 8, None]])
        models = gbt_impute_fit(train, trees=5, depth=2, lr=0.3, seed=1)
        assert models[0] is None
        assert models[1] is not None and models[2] is not None
        assert models[1].n_features == 2
