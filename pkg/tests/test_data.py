"""Dataset construction, synthetic generators, CSV ingestion."""

import numpy as np
import pytest

from dperm.data import (
    CLASSIFICATION,
    LOGISTIC_SEPARABLE,
    REGRESSION,
    RIDGE_REGRESSION,
    SIGMOID_NONCONVEX,
    Dataset,
    SyntheticSpec,
    generate,
    load_csv,
    split,
    standardize,
    write_csv,
)
from dperm.losses import LogisticLoss, certify_constants, loss_grad, Example
from dperm.mechanisms import RngStream


def _tiny(task=REGRESSION):
    X = np.array([[0.6, 0.0], [0.0, 0.8]])
    y = np.array([1.0, -1.0])
    return Dataset(X=X, y=y, B=1.0, task=task, name="tiny")


class TestDataset:
    def test_arrays_are_read_only(self):
        S = _tiny()
        with pytest.raises(ValueError):
            S.X[0, 0] = 9.0
        with pytest.raises(ValueError):
            S.y[0] = 9.0

    def test_norm_bound_enforced(self):
        with pytest.raises(ValueError, match="norm"):
            Dataset(X=np.array([[2.0, 0.0]]), y=np.array([1.0]), B=1.0,
                    task=REGRESSION, name="bad")

    def test_slack_allows_rounding_noise(self):
        Dataset(X=np.array([[1.0 + 1e-12]]), y=np.array([0.0]), B=1.0,
                task=REGRESSION, name="edge")

    def test_classification_labels_checked(self):
        with pytest.raises(ValueError, match="labels"):
            Dataset(X=np.array([[0.1]]), y=np.array([0.5]), B=1.0,
                    task=CLASSIFICATION, name="bad")

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="shape"):
            Dataset(X=np.array([[0.1], [0.2]]), y=np.array([1.0]), B=1.0,
                    task=REGRESSION, name="bad")

    def test_unknown_task(self):
        with pytest.raises(ValueError, match="task"):
            Dataset(X=np.array([[0.1]]), y=np.array([1.0]), B=1.0,
                    task="ranking", name="bad")

    def test_feature_names_length_checked(self):
        with pytest.raises(ValueError, match="feature_names"):
            Dataset(X=np.array([[0.1, 0.2]]), y=np.array([1.0]), B=1.0,
                    task=REGRESSION, name="bad", feature_names=("one",))

    def test_n_d_properties(self):
        S = _tiny()
        assert (S.n, S.d) == (2, 2)


class TestGenerate:
    @pytest.mark.parametrize("kind", [RIDGE_REGRESSION, LOGISTIC_SEPARABLE, SIGMOID_NONCONVEX])
    def test_rows_on_unit_sphere(self, kind):
        S = generate(SyntheticSpec(kind=kind, n=200, d=6, noise_level=0.1, seed=5))
        norms = np.linalg.norm(S.X, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12
        assert S.B == 1.0
        assert (S.n, S.d) == (200, 6)

    def test_ridge_noise_free_is_realizable(self):
        S = generate(SyntheticSpec(kind=RIDGE_REGRESSION, n=100, d=4, noise_level=0.0))
        _, residual, _, _ = np.linalg.lstsq(S.X, S.y, rcond=None)
        assert residual[0] < 1e-20

    def test_logistic_labels_and_flips(self):
        clean = generate(SyntheticSpec(kind=LOGISTIC_SEPARABLE, n=500, d=4, noise_level=0.0, seed=3))
        noisy = generate(SyntheticSpec(kind=LOGISTIC_SEPARABLE, n=500, d=4, noise_level=0.3, seed=3))
        assert set(np.unique(clean.y)) <= {-1.0, 1.0}
        flipped = np.mean(clean.y != noisy.y)
        assert 0.2 < flipped < 0.4

    def test_sigmoid_labels_in_unit_interval(self):
        S = generate(SyntheticSpec(kind=SIGMOID_NONCONVEX, n=300, d=5, noise_level=0.2))
        assert S.task == REGRESSION
        assert np.all((S.y > 0.0) & (S.y < 1.0))

    def test_same_spec_same_bytes(self):
        a = generate(SyntheticSpec(kind=RIDGE_REGRESSION, n=50, d=3, noise_level=0.1, seed=9))
        b = generate(SyntheticSpec(kind=RIDGE_REGRESSION, n=50, d=3, noise_level=0.1, seed=9))
        assert a.X.tobytes() == b.X.tobytes()
        assert a.y.tobytes() == b.y.tobytes()

    def test_seed_changes_draw(self):
        a = generate(SyntheticSpec(kind=RIDGE_REGRESSION, n=50, d=3, seed=1))
        b = generate(SyntheticSpec(kind=RIDGE_REGRESSION, n=50, d=3, seed=2))
        assert not np.array_equal(a.X, b.X)

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="kind"):
            SyntheticSpec(kind="linear", n=10, d=2)
        with pytest.raises(ValueError, match="n "):
            SyntheticSpec(kind=RIDGE_REGRESSION, n=0, d=2)
        with pytest.raises(ValueError, match="noise_level"):
            SyntheticSpec(kind=RIDGE_REGRESSION, n=10, d=2, noise_level=-0.1)

    def test_gradients_respect_certified_bound(self):
        # Joint contract with the loss layer: generated rows keep ||x|| <= B,
        # so per-example gradients stay within the certified L.
        S = generate(SyntheticSpec(kind=LOGISTIC_SEPARABLE, n=100, d=5, noise_level=0.1))
        model = LogisticLoss(mu=0.1, B=S.B, domain_radius=2.0)
        L, _ = certify_constants(model)
        gen = RngStream(4).generator()
        for _ in range(50):
            w = gen.standard_normal(5)
            w *= 2.0 * gen.random() / np.linalg.norm(w)
            i = int(gen.integers(0, S.n))
            g = loss_grad(model, w, Example(S.X[i], S.y[i]))
            assert np.linalg.norm(g) <= L * (1 + 1e-9)


class TestStandardize:
    def test_scales_to_unit_max_norm(self):
        X = np.array([[2.0, 0.0], [0.0, 4.0]])
        S = Dataset(X=X, y=np.array([1.0, 2.0]), B=4.0, task=REGRESSION, name="raw")
        out = standardize(S)
        assert np.allclose(np.linalg.norm(out.X, axis=1), [0.5, 1.0])
        assert out.B == 1.0

    def test_regression_labels_rescaled(self):
        X = np.array([[1.0], [0.5]])
        S = Dataset(X=X, y=np.array([10.0, -5.0]), B=1.0, task=REGRESSION, name="raw")
        out = standardize(S)
        assert np.allclose(out.y, [1.0, -0.5])
        assert out.y_scale == 10.0

    def test_classification_labels_untouched(self):
        X = np.array([[2.0], [1.0]])
        S = Dataset(X=X, y=np.array([1.0, -1.0]), B=2.0, task=CLASSIFICATION, name="raw")
        out = standardize(S)
        assert np.array_equal(out.y, S.y)

    def test_idempotent(self):
        X = np.array([[2.0, 0.0], [0.0, 4.0]])
        S = Dataset(X=X, y=np.array([10.0, -5.0]), B=4.0, task=REGRESSION, name="raw")
        once = standardize(S)
        twice = standardize(once)
        assert np.array_equal(once.X, twice.X)
        assert np.array_equal(once.y, twice.y)
        assert once.y_scale == twice.y_scale

    def test_zero_matrix_rejected(self):
        S = Dataset(X=np.zeros((2, 2)), y=np.zeros(2), B=1.0, task=REGRESSION, name="z")
        with pytest.raises(ValueError, match="all-zero"):
            standardize(S)


class TestSplit:
    def test_sizes_and_partition(self):
        S = generate(SyntheticSpec(kind=RIDGE_REGRESSION, n=10, d=2, seed=1))
        train, test = split(S, 0.8, RngStream(7))
        assert (train.n, test.n) == (8, 2)
        joined = np.vstack([train.X, test.X])
        assert sorted(map(tuple, joined)) == sorted(map(tuple, S.X))

    def test_deterministic(self):
        S = generate(SyntheticSpec(kind=RIDGE_REGRESSION, n=10, d=2, seed=1))
        a = split(S, 0.7, RngStream(3))
        b = split(S, 0.7, RngStream(3))
        assert np.array_equal(a[0].X, b[0].X)

    def test_too_small(self):
        S = Dataset(X=np.array([[0.1]]), y=np.array([1.0]), B=1.0,
                    task=REGRESSION, name="one")
        with pytest.raises(ValueError, match="two examples"):
            split(S, 0.5, RngStream(0))

    def test_degenerate_fraction(self):
        S = generate(SyntheticSpec(kind=RIDGE_REGRESSION, n=3, d=2, seed=1))
        with pytest.raises(ValueError, match="degenerate"):
            split(S, 0.99, RngStream(0))

    def test_fraction_range(self):
        S = generate(SyntheticSpec(kind=RIDGE_REGRESSION, n=10, d=2, seed=1))
        with pytest.raises(ValueError, match="train_fraction"):
            split(S, 1.0, RngStream(0))


class TestCsv:
    def test_numeric_round_trip(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("a,b,label\n0.25,0.5,1\n-0.1,0.2,0\n", encoding="utf-8")
        S = load_csv(str(p), "label", CLASSIFICATION)
        assert np.array_equal(S.X, [[0.25, 0.5], [-0.1, 0.2]])
        assert np.array_equal(S.y, [1.0, -1.0])  # 0/1 mapped to -1/+1
        assert S.feature_names == ("a", "b")
        assert S.label_name == "label"

    def test_label_by_index(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("label,a\n1,0.25\n-1,0.5\n", encoding="utf-8")
        S = load_csv(str(p), 0, CLASSIFICATION)
        assert np.array_equal(S.y, [1.0, -1.0])
        assert S.feature_names == ("a",)

    def test_two_level_strings_map_by_sorted_order(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("a,label\n0.1,yes\n0.2,no\n0.3,yes\n", encoding="utf-8")
        S = load_csv(str(p), "label", CLASSIFICATION)
        # "no" < "yes", so no -> -1 and yes -> +1.
        assert np.array_equal(S.y, [1.0, -1.0, 1.0])

    def test_more_than_two_levels_rejected(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("a,label\n0.1,1\n0.2,2\n0.3,3\n", encoding="utf-8")
        with pytest.raises(ValueError, match="binary"):
            load_csv(str(p), "label", CLASSIFICATION)

    def test_missing_label_column_named(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("a,b\n0.1,0.2\n", encoding="utf-8")
        with pytest.raises(ValueError, match="'target'"):
            load_csv(str(p), "target", REGRESSION)

    def test_missing_value_located(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("a,label\n0.1,1\n,0\n", encoding="utf-8")
        with pytest.raises(ValueError, match="row 3.*'a'"):
            load_csv(str(p), "label", CLASSIFICATION)

    def test_non_numeric_cell_located(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("a,label\noops,1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="'oops'.*row 2"):
            load_csv(str(p), "label", CLASSIFICATION)

    def test_ragged_row_rejected(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("a,b,label\n0.1,0.2,1\n0.3,1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="row 3"):
            load_csv(str(p), "label", CLASSIFICATION)

    def test_empty_and_headerless(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("", encoding="utf-8")
        with pytest.raises(ValueError, match="empty"):
            load_csv(str(p), "label", REGRESSION)
        p.write_text("a,label\n", encoding="utf-8")
        with pytest.raises(ValueError, match="no data rows"):
            load_csv(str(p), "label", REGRESSION)

    def test_one_hot_expansion(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text(
            "num,color,label\n1.0,red,0.5\n2.0,blue,0.25\n3.0,red,0.125\n",
            encoding="utf-8",
        )
        S = load_csv(str(p), "label", REGRESSION, categorical=("color",))
        assert S.feature_names == ("num", "color=blue", "color=red")
        assert np.array_equal(S.X[:, 1:], [[0, 1], [1, 0], [0, 1]])

    def test_unknown_categorical_rejected(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("a,label\n0.1,1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="categorical"):
            load_csv(str(p), "label", REGRESSION, categorical=("shade",))

    def test_write_then_load_is_exact(self, tmp_path):
        S = generate(SyntheticSpec(kind=RIDGE_REGRESSION, n=20, d=3, noise_level=0.1))
        p = tmp_path / "out.csv"
        write_csv(S, str(p))
        back = load_csv(str(p), "label", REGRESSION)
        assert np.array_equal(back.X, S.X)
        assert np.array_equal(back.y, S.y)
