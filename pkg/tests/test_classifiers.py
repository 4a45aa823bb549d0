import json

import numpy as np
import pytest

from hpcid.classifiers import (
    ClassifierSpec,
    GaussianNaiveBayes,
    KNearestNeighbors,
    SoftmaxRegression,
    fit_model,
    load_model,
    make_estimator,
    predict,
    predict_proba,
    save_model,
)
from hpcid.dataset import Dataset, fit_normalizer
from hpcid.errors import ConfigError, HpcIdError, SchemaMismatchError


def _point_mass_data(classes=4, per_class=8, features=3):
    # distinct per-class means, zero within-class spread
    rows = np.vstack([
        np.tile(np.arange(features, dtype=float) + 10.0 * c, (per_class, 1))
        for c in range(classes)
    ])
    labels = np.repeat(np.arange(classes), per_class)
    return rows, labels


def _noisy_data(classes=3, per_class=40, features=4, seed=0, spread=0.5):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=4.0, size=(classes, features))
    rows = np.vstack([
        centers[c] + rng.normal(scale=spread, size=(per_class, features))
        for c in range(classes)
    ])
    labels = np.repeat(np.arange(classes), per_class)
    return rows, labels


# Gaussian naive Bayes --------------------------------------------------------


def test_nb_perfect_on_point_masses():
    X, y = _point_mass_data()
    model = GaussianNaiveBayes().fit(X, y)
    assert (model.predict(X) == y).all()


def test_nb_proba_rows_sum_to_one():
    X, y = _noisy_data()
    model = GaussianNaiveBayes().fit(X, y)
    proba = model.predict_proba(X)
    assert np.abs(proba.sum(axis=1) - 1.0).max() <= 1e-9
    assert (proba >= 0).all() and (proba <= 1).all()


def test_nb_matches_hand_computed_likelihoods():
    # two classes, one feature; verify against the density formula
    X = np.array([[0.0], [2.0], [10.0], [12.0]])
    y = np.array([0, 0, 1, 1])
    model = GaussianNaiveBayes(var_smoothing=0.0).fit(X, y)
    # class stats: mean 1/11, population var 1 each
    def log_lik(x, mu, var):
        return -0.5 * (np.log(2 * np.pi * var) + (x - mu) ** 2 / var)
    x = 4.0
    l0 = np.log(0.5) + log_lik(x, 1.0, 1.0)
    l1 = np.log(0.5) + log_lik(x, 11.0, 1.0)
    expected = np.exp(l0) / (np.exp(l0) + np.exp(l1))
    got = model.predict_proba([[x]])[0]
    assert got[0] == pytest.approx(expected, abs=1e-12)


# k nearest neighbors ---------------------------------------------------------


def knn_bruteforce_oracle(train_X, train_y, test_X, k, class_table):
    """Independent reference: explicit loops, explicit tie rules."""
    predictions = []
    for x in test_X:
        dists = []
        for idx, row in enumerate(train_X):
            d = sum((float(a) - float(b)) ** 2 for a, b in zip(x, row))
            dists.append((d, idx))
        dists.sort(key=lambda t: (t[0], t[1]))  # distance, then row index
        votes = {}
        for d, idx in dists[:k]:
            votes[train_y[idx]] = votes.get(train_y[idx], 0) + 1
        best = max(votes.values())
        winners = sorted(label for label, v in votes.items() if v == best)
        predictions.append(winners[0])  # smaller class label on vote ties
    return np.array(predictions)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_knn_matches_bruteforce_oracle(k):
    rng = np.random.default_rng(k)
    train_X = rng.normal(size=(200, 5))
    train_y = rng.integers(0, 4, size=200)
    test_X = rng.normal(size=(60, 5))
    model = KNearestNeighbors(n_neighbors=k).fit(train_X, train_y)
    got = model.predict(test_X)
    want = knn_bruteforce_oracle(train_X, train_y, test_X, k, model.classes_)
    assert np.array_equal(got, want)


def test_knn_k1_memorizes_distinct_rows():
    X, y = _noisy_data(seed=2)
    model = KNearestNeighbors(n_neighbors=1).fit(X, y)
    assert (model.predict(X) == y).all()


def test_knn_vote_fraction_proba():
    # 3 votes for class 0, 2 for class 1 -> 0.6 / 0.4
    X = np.array([[0.0], [0.1], [0.2], [1.0], [1.1], [50.0]])
    y = np.array([0, 0, 0, 1, 1, 2])
    model = KNearestNeighbors(n_neighbors=5).fit(X, y)
    proba = model.predict_proba([[0.5]])[0]
    assert proba[0] == pytest.approx(0.6)
    assert proba[1] == pytest.approx(0.4)
    assert proba[2] == 0.0
    assert model.predict([[0.5]])[0] == 0


def test_knn_distance_tie_prefers_lower_row_index():
    X = np.array([[1.0], [-1.0], [1.0]])
    y = np.array([2, 1, 0])
    model = KNearestNeighbors(n_neighbors=1).fit(X, y)
    # x=0 is equidistant from all three; stable order keeps row 0 first
    assert model.predict([[0.0]])[0] == 2


def test_knn_rejects_k_beyond_rows():
    with pytest.raises(HpcIdError):
        KNearestNeighbors(n_neighbors=10).fit(np.ones((3, 1)), [0, 1, 0])


# softmax regression ----------------------------------------------------------


def test_softmax_separable_two_class():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(-3, 0.5, size=(60, 2)), rng.normal(3, 0.5, size=(60, 2))])
    y = np.array([0] * 60 + [1] * 60)
    X = (X - X.mean(0)) / X.std(0)
    model = SoftmaxRegression(learning_rate=0.5, max_iter=500).fit(X, y)
    assert (model.predict(X) == y).mean() >= 0.99


def test_softmax_proba_valid_and_deterministic():
    X, y = _noisy_data(seed=4)
    a = SoftmaxRegression(learning_rate=0.1, l2=0.01).fit(X, y)
    b = SoftmaxRegression(learning_rate=0.1, l2=0.01).fit(X, y)
    pa, pb = a.predict_proba(X), b.predict_proba(X)
    assert np.array_equal(pa, pb)
    assert np.abs(pa.sum(axis=1) - 1.0).max() <= 1e-9


def test_softmax_l2_shrinks_weights():
    X, y = _noisy_data(seed=5)
    loose = SoftmaxRegression(l2=0.0).fit(X, y)
    tight = SoftmaxRegression(l2=0.5).fit(X, y)
    assert np.abs(tight.coef_).sum() < np.abs(loose.coef_).sum()


# spec / registry -------------------------------------------------------------


def test_spec_validates_gridable_params():
    with pytest.raises(ConfigError):
        ClassifierSpec.make("knn", {"metric": "manhattan"})
    with pytest.raises(ConfigError):
        ClassifierSpec.make("nope", {})
    spec = ClassifierSpec.make("knn", {"n_neighbors": 3}, seed=5)
    est = make_estimator(spec)
    assert est.n_neighbors == 3


def test_argmax_of_proba_equals_predict():
    X, y = _noisy_data(seed=6)
    for kind, params in [
        ("gaussian_nb", {}),
        ("knn", {"n_neighbors": 3}),
        ("decision_tree", {}),
        ("random_forest", {"n_trees": 20}),
        ("logistic_regression", {}),
    ]:
        est = make_estimator(ClassifierSpec.make(kind, params, seed=1))
        est.fit(X, y)
        proba = est.predict_proba(X)
        assert np.array_equal(est.classes_[np.argmax(proba, axis=1)], est.predict(X))


def test_fit_model_requires_two_classes():
    rows = np.random.default_rng(0).normal(size=(10, 2))
    single = Dataset(["A", "B"], rows, [0] * 10, ["t"] * 10, {})
    with pytest.raises(HpcIdError):
        fit_model(ClassifierSpec.make("gaussian_nb"), single)


def test_trained_model_schema_checks():
    rows, labels = _noisy_data()
    data = Dataset([f"F{i}" for i in range(rows.shape[1])], np.abs(rows), labels,
                   ["t"] * len(labels), {})
    norm = fit_normalizer(data)
    model = fit_model(ClassifierSpec.make("gaussian_nb"), data, normalizer=norm)
    with pytest.raises(SchemaMismatchError):
        predict(model, np.ones((2, rows.shape[1] + 1)))
    proba = predict_proba(model, data.rows)
    assert proba.shape == (len(labels), 3)


def test_model_save_load_round_trip(tmp_path):
    rows, labels = _noisy_data(seed=8)
    data = Dataset([f"F{i}" for i in range(rows.shape[1])], np.abs(rows) + 1.0,
                   labels, ["t"] * len(labels), {})
    norm = fit_normalizer(data)
    for kind, params in [
        ("gaussian_nb", {}),
        ("knn", {"n_neighbors": 3}),
        ("decision_tree", {"max_depth": 8}),
        ("random_forest", {"n_trees": 10, "max_depth": 16}),
        ("logistic_regression", {"learning_rate": 0.5}),
    ]:
        spec = ClassifierSpec.make(kind, params, seed=11)
        model = fit_model(spec, data, normalizer=norm, cv_score=0.9)
        path = tmp_path / f"{kind}.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.spec == spec
        assert loaded.class_table == model.class_table
        assert loaded.cv_score == 0.9
        assert np.array_equal(predict(loaded, data.rows), predict(model, data.rows))
        assert np.array_equal(
            predict_proba(loaded, data.rows), predict_proba(model, data.rows)
        )
        assert np.array_equal(loaded.normalizer.means_, norm.means_)


def test_model_file_is_versioned_json(tmp_path):
    rows, labels = _noisy_data()
    data = Dataset([f"F{i}" for i in range(rows.shape[1])], np.abs(rows) + 1.0,
                   labels, ["t"] * len(labels), {})
    model = fit_model(ClassifierSpec.make("gaussian_nb"), data)
    path = tmp_path / "m.json"
    save_model(model, path)
    payload = json.loads(path.read_text())
    assert payload["format"] == "hpcid-model"
    assert payload["version"] == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "other"}')
    with pytest.raises(ConfigError):
        load_model(bad)
