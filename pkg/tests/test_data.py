import numpy as np
import pytest

from penforest.data import (CLASSIFICATION, REGRESSION, Dataset, DataError, load_csv,
                            read_features, split_train_test, standardize_target, write_csv)


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _reg(y, X=None):
    y = np.asarray(y, dtype=float)
    X = np.zeros((len(y), 1)) if X is None else np.asarray(X, dtype=float)
    return Dataset(tuple(f"x{j}" for j in range(X.shape[1])), X, y, REGRESSION)


def test_load_regression(tmp_path):
    d = load_csv(_write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n7,8,9\n"), "y")
    assert (d.n, d.p, d.feature_names) == (3, 2, ("a", "b"))
    assert d.X.tolist() == [[1, 2], [4, 5], [7, 8]]
    assert d.y.tolist() == [3, 6, 9]


def test_target_may_sit_anywhere(tmp_path):
    d = load_csv(_write(tmp_path, "y,a\n1,2\n3,4\n"), "y")
    assert d.feature_names == ("a",) and d.y.tolist() == [1, 3]


def test_first_appearance_label_encoding(tmp_path):
    d = load_csv(_write(tmp_path, "a,y\n1,A\n2,B\n3,A\n"), "y", CLASSIFICATION)
    assert d.classes == ("A", "B")
    assert d.y.tolist() == [0, 1, 0]


@pytest.mark.parametrize("text,target,message", [
    ("a,b,y\n1,abc,3\n", "y", "row 2, column b"),
    ("a,b\n1,2\n", "y", "target column 'y' not found"),
    ("", "y", "empty file"),
    ("a,a,y\n1,2,3\n", "y", "duplicate header 'a'"),
    ("a,y\n1,2\n3\n", "y", "row 3"),
    ("a,y\n,2\n", "y", "row 2, column a"),
    ("a,y\nnan,2\n", "y", "non-finite"),
    ("a,y\n", "y", "no data rows"),
])
def test_load_errors_name_the_location(tmp_path, text, target, message):
    with pytest.raises(DataError, match=message):
        load_csv(_write(tmp_path, text), target)


def test_single_class_rejected(tmp_path):
    with pytest.raises(DataError, match="fewer than 2 classes"):
        load_csv(_write(tmp_path, "a,y\n1,A\n2,A\n"), "y", CLASSIFICATION)


def test_csv_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 3)) * 1e-7 + rng.normal(size=(20, 3))
    d = Dataset(("p", "q", "r"), X, rng.normal(size=20), REGRESSION, (), "target")
    write_csv(d, tmp_path / "out.csv")
    back = load_csv(tmp_path / "out.csv", "target")
    assert back.feature_names == d.feature_names
    assert np.array_equal(back.X, d.X) and np.array_equal(back.y, d.y)

    c = Dataset(("p",), X[:, :1], np.array([1, 0] * 10), CLASSIFICATION, ("no", "yes"), "label")
    write_csv(c, tmp_path / "c.csv")
    back = load_csv(tmp_path / "c.csv", "label", CLASSIFICATION)
    assert np.array_equal(back.X, c.X)
    # labels re-encode by first appearance: "yes" comes first in the file
    assert [back.classes[k] for k in back.y] == [c.classes[k] for k in c.y]


def test_read_features_selects_by_name(tmp_path):
    path = _write(tmp_path, "b,y,a\n1,9,2\n3,9,4\n")
    assert read_features(path, ("a", "b")).tolist() == [[2, 1], [4, 3]]
    with pytest.raises(DataError, match="missing feature columns"):
        read_features(path, ("c",))


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(("a", "a"), np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        Dataset(("a",), np.zeros((2, 1)), np.zeros(3))
    with pytest.raises(ValueError):
        Dataset(("a",), np.zeros((2, 1)), np.array([0, 0]), CLASSIFICATION, ("A",))
    d = _reg([1.0, 2.0])
    with pytest.raises(ValueError):
        d.X[0, 0] = 5.0  # read-only


def test_split_sizes_and_disjointness():
    d = _reg(np.arange(10))
    plan = split_train_test(d, 0.8, seed=1)
    assert (len(plan.train_indices), len(plan.test_indices)) == (8, 2)
    assert set(plan.train_indices) | set(plan.test_indices) == set(range(10))
    assert not set(plan.train_indices) & set(plan.test_indices)
    assert split_train_test(d, 0.8, seed=1) == plan
    two = split_train_test(_reg([1, 2]), 0.5, seed=3)
    assert len(two.train_indices) == len(two.test_indices) == 1


@pytest.mark.parametrize("fraction", [0.0, 1.0, 0.01, 0.99])
def test_degenerate_split_fraction(fraction):
    with pytest.raises(DataError):
        split_train_test(_reg(np.arange(10)), fraction, 0)


def test_split_inclusion_frequency():
    d = _reg(np.arange(20))
    counts = np.zeros(20)
    for seed in range(1000):
        counts[list(split_train_test(d, 0.7, seed).train_indices)] += 1
    assert np.all(np.abs(counts / 1000 - 0.7) <= 0.05)


def test_standardize_uses_training_moments():
    tr, te, mean, sd = standardize_target(_reg([1, 2, 3]), _reg([2, 5]))
    assert (mean, sd) == (2.0, 1.0)
    assert tr.y.tolist() == [-1, 0, 1]
    assert te.y.tolist() == [0, 3]
    with pytest.raises(DataError, match="zero variance"):
        standardize_target(_reg([5, 5]), _reg([5]))
