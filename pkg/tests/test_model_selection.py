import numpy as np
import pytest

from hpcid.dataset import Dataset
from hpcid.errors import HpcIdError
from hpcid.model_selection import CVTable, enumerate_grid, grid_search, stratified_kfold


def _dataset(classes=3, per_class=30, features=4, seed=0, spread=0.3):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=5.0, size=(classes, features))
    rows = np.vstack([
        centers[c] + rng.normal(scale=spread, size=(per_class, features))
        for c in range(classes)
    ])
    labels = np.repeat(np.arange(classes), per_class)
    return Dataset([f"F{i}" for i in range(features)], rows, labels,
                   ["t"] * len(labels), {})


def test_folds_are_disjoint_and_exhaustive():
    labels = np.repeat(np.arange(4), 25)
    folds = stratified_kfold(labels, 10, seed=3)
    assert len(folds) == 10
    joined = np.concatenate(folds)
    assert sorted(joined.tolist()) == list(range(100))
    flat = set()
    for fold in folds:
        assert flat.isdisjoint(fold.tolist())
        flat.update(fold.tolist())


def test_folds_per_class_counts_within_one():
    labels = np.repeat(np.arange(3), [23, 31, 47])
    folds = stratified_kfold(labels, 10, seed=1)
    for c in range(3):
        per_fold = [int((labels[f] == c).sum()) for f in folds]
        assert max(per_fold) - min(per_fold) <= 1


def test_folds_deterministic_and_seed_sensitive():
    labels = np.repeat(np.arange(4), 30)
    a = stratified_kfold(labels, 10, seed=5)
    b = stratified_kfold(labels, 10, seed=5)
    c = stratified_kfold(labels, 10, seed=6)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert any(not np.array_equal(x, y) for x, y in zip(a, c))


def test_infeasible_k_rejected():
    labels = np.array([0] * 5 + [1] * 20)
    with pytest.raises(HpcIdError):
        stratified_kfold(labels, 10, seed=0)
    with pytest.raises(HpcIdError):
        stratified_kfold(labels, 1, seed=0)


def test_grid_enumeration_order():
    grid = {"a": [1, 2], "b": ["x", "y"]}
    points = enumerate_grid(grid)
    assert points == [
        {"a": 1, "b": "x"}, {"a": 1, "b": "y"},
        {"a": 2, "b": "x"}, {"a": 2, "b": "y"},
    ]
    assert enumerate_grid({}) == [{}]


def test_single_point_grid():
    data = _dataset()
    best, table = grid_search("gaussian_nb", {"var_smoothing": [1e-9]}, data,
                              k=10, seed=2)
    assert best.params == {"var_smoothing": 1e-9}
    assert len(table.rows) == 10
    assert table.best_point() == 0


def test_cv_table_records_every_point_and_fold():
    data = _dataset()
    grid = {"n_neighbors": [1, 3, 5]}
    best, table = grid_search("knn", grid, data, k=5, seed=2)
    assert len(table.rows) == 15
    points = {r[0] for r in table.rows}
    assert points == {0, 1, 2}
    text = table.to_text()
    assert "mean accuracy per point" in text


def test_deeper_tree_beats_stump_on_separable_grid():
    data = _dataset(classes=4, spread=0.2, seed=9)
    grid = {"max_depth": [1, 8]}
    best, table = grid_search("decision_tree", grid, data, k=5, seed=4)
    assert table.mean_accuracy(1) >= table.mean_accuracy(0)
    assert best.params["max_depth"] == 8


def test_grid_search_deterministic_under_seed():
    data = _dataset(seed=11)
    grid = {"n_neighbors": [1, 3]}
    b1, t1 = grid_search("knn", grid, data, k=5, seed=7)
    b2, t2 = grid_search("knn", grid, data, k=5, seed=7)
    assert b1 == b2
    assert t1.to_text() == t2.to_text()


def test_tie_breaks_by_enumeration_order():
    table = CVTable(kind="knn", k=2, seed=0)
    table.record(0, {"n_neighbors": 1}, 0, 0.9)
    table.record(0, {"n_neighbors": 1}, 1, 0.9)
    table.record(1, {"n_neighbors": 3}, 0, 0.9)
    table.record(1, {"n_neighbors": 3}, 1, 0.9)
    assert table.best_point() == 0
