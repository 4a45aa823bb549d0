"""Classifier suite behind one contract: fit, predict, predict_proba.

Five kinds are implemented; the registry validates hyperparameters, builds
estimators from specs, and carries the default search grids. All fitted
behavior is a pure function of (data, hyperparameters, seed); prediction
tie-breaks are documented per estimator.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .dataset import Dataset, Normalizer
from .errors import ConfigError, HpcIdError
from .trees import CartDecisionTree, RandomForest
from .validation import as_float_matrix, as_label_vector, check_fitted, check_n_features

MODEL_FORMAT = "hpcid-model"
MODEL_VERSION = 1


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class GaussianNaiveBayes(BaseEstimator, ClassifierMixin):
    """Per-class, per-feature Gaussian likelihoods with shared smoothing.

    The smoothing term is ``var_smoothing`` times the largest per-feature
    variance of the training matrix, added to every class variance.
    """

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_label_vector(y, X.shape[0])
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        n_classes = len(self.classes_)
        self.theta_ = np.zeros((n_classes, X.shape[1]))
        self.var_ = np.zeros((n_classes, X.shape[1]))
        self.class_log_prior_ = np.zeros(n_classes)
        global_var = X.var(axis=0)
        self.epsilon_ = max(self.var_smoothing * float(global_var.max()), 1e-300)
        for i, c in enumerate(self.classes_):
            rows = X[y == c]
            self.theta_[i] = rows.mean(axis=0)
            self.var_[i] = rows.var(axis=0) + self.epsilon_
            self.class_log_prior_[i] = np.log(len(rows) / X.shape[0])
        return self

    def _joint_log_likelihood(self, X):
        jll = np.empty((X.shape[0], len(self.classes_)))
        for i in range(len(self.classes_)):
            log_det = np.sum(np.log(2.0 * np.pi * self.var_[i]))
            quad = ((X - self.theta_[i]) ** 2 / self.var_[i]).sum(axis=1)
            jll[:, i] = self.class_log_prior_[i] - 0.5 * (log_det + quad)
        return jll

    def predict_proba(self, X):
        check_fitted(self, "theta_")
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        jll = self._joint_log_likelihood(X)
        shifted = jll - jll.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def to_state(self):
        return {
            "classes": self.classes_.tolist(),
            "n_features": int(self.n_features_in_),
            "theta": self.theta_.tolist(),
            "var": self.var_.tolist(),
            "class_log_prior": self.class_log_prior_.tolist(),
            "epsilon": float(self.epsilon_),
        }

    def _restore(self, state):
        self.classes_ = np.asarray(state["classes"], dtype=np.int64)
        self.n_features_in_ = int(state["n_features"])
        self.theta_ = np.asarray(state["theta"], dtype=np.float64)
        self.var_ = np.asarray(state["var"], dtype=np.float64)
        self.class_log_prior_ = np.asarray(state["class_log_prior"], dtype=np.float64)
        self.epsilon_ = float(state["epsilon"])
        return self


class KNearestNeighbors(BaseEstimator, ClassifierMixin):
    """Majority vote over the k nearest training rows (Euclidean).

    Distance ties resolve to the lower training-row index (stable sort);
    vote ties resolve to the smaller class label. Probabilities are vote
    fractions.
    """

    def __init__(self, n_neighbors=5):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_label_vector(y, X.shape[0])
        if self.n_neighbors > X.shape[0]:
            raise HpcIdError(
                f"n_neighbors={self.n_neighbors} exceeds {X.shape[0]} training rows"
            )
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        self._X = X.copy()
        self._codes = np.searchsorted(self.classes_, y)
        return self

    def predict_proba(self, X):
        check_fitted(self, "_X")
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        n_classes = len(self.classes_)
        out = np.empty((X.shape[0], n_classes))
        k = self.n_neighbors
        chunk = max(1, 2_000_000 // max(self._X.shape[0], 1))
        for start in range(0, X.shape[0], chunk):
            block = X[start:start + chunk]
            d2 = ((block[:, None, :] - self._X[None, :, :]) ** 2).sum(axis=2)
            order = np.argsort(d2, axis=1, kind="stable")[:, :k]
            for i, neighbors in enumerate(order):
                votes = np.bincount(self._codes[neighbors], minlength=n_classes)
                out[start + i] = votes / k
        return out

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def to_state(self):
        return {
            "classes": self.classes_.tolist(),
            "n_features": int(self.n_features_in_),
            "train_rows": self._X.tolist(),
            "train_codes": self._codes.tolist(),
        }

    def _restore(self, state):
        self.classes_ = np.asarray(state["classes"], dtype=np.int64)
        self.n_features_in_ = int(state["n_features"])
        self._X = np.asarray(state["train_rows"], dtype=np.float64)
        self._codes = np.asarray(state["train_codes"], dtype=np.int64)
        return self


class SoftmaxRegression(BaseEstimator, ClassifierMixin):
    """Multinomial logistic regression by full-batch gradient descent.

    Weights start at zero and update for at most ``max_iter`` steps,
    stopping early when the gradient max-norm falls under ``tol``. The L2
    penalty applies to weights, not intercepts.
    """

    def __init__(self, learning_rate=0.1, l2=0.0, max_iter=500, tol=1e-6,
                 random_state=None):
        self.learning_rate = learning_rate
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_label_vector(y, X.shape[0])
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        codes = np.searchsorted(self.classes_, y)
        n, m = X.shape
        c = len(self.classes_)
        onehot = np.zeros((n, c))
        onehot[np.arange(n), codes] = 1.0
        W = np.zeros((c, m))
        b = np.zeros(c)
        self.n_iter_ = 0
        for _ in range(self.max_iter):
            proba = _softmax(X @ W.T + b)
            diff = proba - onehot
            grad_w = diff.T @ X / n + self.l2 * W
            grad_b = diff.mean(axis=0)
            self.n_iter_ += 1
            if max(np.abs(grad_w).max(), np.abs(grad_b).max()) < self.tol:
                break
            W -= self.learning_rate * grad_w
            b -= self.learning_rate * grad_b
        self.coef_ = W
        self.intercept_ = b
        return self

    def predict_proba(self, X):
        check_fitted(self, "coef_")
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        return _softmax(X @ self.coef_.T + self.intercept_)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def to_state(self):
        return {
            "classes": self.classes_.tolist(),
            "n_features": int(self.n_features_in_),
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_.tolist(),
            "n_iter": int(self.n_iter_),
        }

    def _restore(self, state):
        self.classes_ = np.asarray(state["classes"], dtype=np.int64)
        self.n_features_in_ = int(state["n_features"])
        self.coef_ = np.asarray(state["coef"], dtype=np.float64)
        self.intercept_ = np.asarray(state["intercept"], dtype=np.float64)
        self.n_iter_ = int(state["n_iter"])
        return self


# ---------------------------------------------------------------------------
# Registry


@dataclass(frozen=True, eq=True)
class ClassifierSpec:
    """A classifier kind with hyperparameters and a fit seed."""

    kind: str
    hyperparams: tuple = ()  # sorted (name, value) pairs
    seed: int = 0

    @staticmethod
    def make(kind, hyperparams=None, seed=0):
        params = dict(hyperparams or {})
        validate_hyperparams(kind, params)
        return ClassifierSpec(
            kind=kind,
            hyperparams=tuple(sorted(params.items())),
            seed=seed,
        )

    @property
    def params(self):
        return dict(self.hyperparams)


_SEEDED_KINDS = {"random_forest", "logistic_regression"}

KINDS = {
    "gaussian_nb": (GaussianNaiveBayes, ("var_smoothing",)),
    "knn": (KNearestNeighbors, ("n_neighbors",)),
    "decision_tree": (CartDecisionTree, ("max_depth", "min_samples_split")),
    "random_forest": (RandomForest, ("n_trees", "max_depth")),
    "logistic_regression": (SoftmaxRegression, ("l2", "learning_rate")),
}

# Search grids are artifact choices (documented in the README), not values
# taken from anywhere else.
DEFAULT_GRIDS = {
    "gaussian_nb": {"var_smoothing": [1e-9, 1e-8, 1e-7]},
    "knn": {"n_neighbors": [1, 3, 5, 7, 9]},
    "decision_tree": {"max_depth": [8, 16, 32, None], "min_samples_split": [2, 8]},
    "random_forest": {"n_trees": [100, 200], "max_depth": [16, None]},
    "logistic_regression": {"l2": [0.0, 0.01, 0.1], "learning_rate": [0.1, 0.5]},
}


def validate_hyperparams(kind, params):
    if kind not in KINDS:
        raise ConfigError(f"unknown classifier kind {kind!r}; choose from {sorted(KINDS)}")
    allowed = set(KINDS[kind][1])
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ConfigError(
            f"hyperparameters {unknown} are not grid-able for {kind!r}; allowed: {sorted(allowed)}"
        )


def make_estimator(spec: ClassifierSpec):
    validate_hyperparams(spec.kind, spec.params)
    cls = KINDS[spec.kind][0]
    kwargs = dict(spec.params)
    if spec.kind in _SEEDED_KINDS:
        kwargs["random_state"] = spec.seed
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# Trained models


@dataclass
class TrainedModel:
    """A fitted classifier plus everything needed to reuse it: the
    normalizer it was trained behind, the class table, and the CV score
    that selected it."""

    spec: ClassifierSpec
    estimator: object
    class_table: list
    schema: list
    normalizer: Normalizer = None
    cv_score: float = None
    provenance: dict = field(default_factory=dict)


def fit_model(spec: ClassifierSpec, train: Dataset, normalizer=None, cv_score=None,
              provenance=None) -> TrainedModel:
    """Fit ``spec`` on an already-normalized training dataset."""
    if len(train) == 0 or train.n_features == 0:
        raise HpcIdError("cannot fit on an empty training set")
    if len(train.class_table) < 2:
        raise HpcIdError("training set has a single class")
    est = make_estimator(spec)
    est.fit(train.rows, train.labels)
    return TrainedModel(
        spec=spec,
        estimator=est,
        class_table=[int(c) for c in est.classes_],
        schema=list(train.schema),
        normalizer=normalizer,
        cv_score=cv_score,
        provenance=dict(provenance or {}),
    )


def predict(model: TrainedModel, rows):
    rows = as_float_matrix(rows)
    check_n_features(rows, len(model.schema), "prediction input")
    return model.estimator.predict(rows)


def predict_proba(model: TrainedModel, rows):
    rows = as_float_matrix(rows)
    check_n_features(rows, len(model.schema), "prediction input")
    return model.estimator.predict_proba(rows)


# ---------------------------------------------------------------------------
# Model persistence (text container, deterministic bytes)


def _normalizer_state(norm):
    if norm is None:
        return None
    return {
        "means": norm.means_.tolist(),
        "stds": norm.stds_.tolist(),
        "constant_mask": norm.constant_mask_.astype(int).tolist(),
        "fitted_on": int(norm.fitted_on_),
        "schema": getattr(norm, "schema_", None),
    }


def _restore_normalizer(state):
    if state is None:
        return None
    norm = Normalizer()
    norm.means_ = np.asarray(state["means"], dtype=np.float64)
    norm.stds_ = np.asarray(state["stds"], dtype=np.float64)
    norm.constant_mask_ = np.asarray(state["constant_mask"], dtype=bool)
    norm.fitted_on_ = int(state["fitted_on"])
    if state.get("schema") is not None:
        norm.schema_ = list(state["schema"])
    return norm


def save_model(model: TrainedModel, path):
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": {
            "kind": model.spec.kind,
            "hyperparams": [[k, v] for k, v in model.spec.hyperparams],
            "seed": model.spec.seed,
        },
        "schema": model.schema,
        "class_table": model.class_table,
        "cv_score": model.cv_score,
        "normalizer": _normalizer_state(model.normalizer),
        "state": model.estimator.to_state(),
        "provenance": model.provenance,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ConfigError(f"{path!r} is not a model file")
    if payload.get("version") != MODEL_VERSION:
        raise ConfigError(f"unsupported model version {payload.get('version')}")
    spec = ClassifierSpec(
        kind=payload["spec"]["kind"],
        hyperparams=tuple((k, v) for k, v in payload["spec"]["hyperparams"]),
        seed=payload["spec"]["seed"],
    )
    est = make_estimator(spec)
    est._restore(payload["state"])
    return TrainedModel(
        spec=spec,
        estimator=est,
        class_table=[int(c) for c in payload["class_table"]],
        schema=list(payload["schema"]),
        normalizer=_restore_normalizer(payload["normalizer"]),
        cv_score=payload["cv_score"],
        provenance=dict(payload.get("provenance", {})),
    )
