"""Seeded stratified k-fold cross-validation and exhaustive grid search.

Every grid point is scored on the same fold partition; the winner is the
highest mean fold accuracy with ties broken by grid enumeration order.
The full (point, fold, accuracy) table is kept for inspection.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .classifiers import ClassifierSpec, make_estimator
from .dataset import Dataset
from .errors import HpcIdError


def stratified_kfold(labels, k, seed=0):
    """k disjoint, exhaustive folds with per-class counts within one.

    Each class's rows are shuffled by the seed and dealt round-robin.
    Requires k to be at most the smallest class count.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise HpcIdError(f"k must be at least 2, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    smallest = int(counts.min())
    if k > smallest:
        raise HpcIdError(
            f"k={k} is infeasible: smallest class has only {smallest} rows"
        )
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for c in classes:
        idx = rng.permutation(np.flatnonzero(labels == c))
        for j, row in enumerate(idx):
            folds[j % k].append(int(row))
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class CVTable:
    """Every (grid point, fold, accuracy) evaluated by a search."""

    kind: str
    k: int
    seed: int
    rows: list = field(default_factory=list)  # (point_idx, params, fold_idx, accuracy)

    def record(self, point_idx, params, fold_idx, accuracy):
        self.rows.append((point_idx, dict(params), fold_idx, float(accuracy)))

    def mean_accuracy(self, point_idx):
        scores = [r[3] for r in self.rows if r[0] == point_idx]
        return sum(scores) / len(scores)

    def best_point(self):
        """Highest mean accuracy; ties keep the earliest grid point."""
        best, best_mean = None, -1.0
        for p in sorted({r[0] for r in self.rows}):
            mean = self.mean_accuracy(p)
            if mean > best_mean:
                best, best_mean = p, mean
        return best

    def to_text(self, provenance=None):
        lines = [f"# {k} = {v}" for k, v in sorted((provenance or {}).items())]
        lines.append(f"# grid search: kind={self.kind} k={self.k} seed={self.seed}")
        lines.append("point\tfold\taccuracy\tparams")
        for point_idx, params, fold_idx, acc in self.rows:
            ptxt = ",".join(f"{k}={v}" for k, v in sorted(params.items()))
            lines.append(f"{point_idx}\t{fold_idx}\t{acc:.6f}\t{ptxt}")
        points = sorted({r[0] for r in self.rows})
        lines.append("# mean accuracy per point")
        for p in points:
            lines.append(f"{p}\t{self.mean_accuracy(p):.6f}")
        return "\n".join(lines) + "\n"


def enumerate_grid(grid):
    """Grid points in deterministic enumeration order (key insertion order,
    values in listed order)."""
    if not grid:
        return [{}]
    names = list(grid)
    combos = itertools.product(*(grid[n] for n in names))
    return [dict(zip(names, combo)) for combo in combos]


def grid_search(kind, grid, train: Dataset, k=10, seed=0, spec_seed=0):
    """Exhaustive search over ``grid`` with stratified k-fold CV.

    Returns (best ClassifierSpec, CVTable). All points share the seeded
    fold partition; estimator seeds are fixed to ``spec_seed``.
    """
    folds = stratified_kfold(train.labels, k, seed)
    points = enumerate_grid(grid)
    table = CVTable(kind=kind, k=k, seed=seed)
    best_idx = None
    best_mean = -1.0
    all_idx = np.arange(len(train))
    for point_idx, params in enumerate(points):
        spec = ClassifierSpec.make(kind, params, seed=spec_seed)
        scores = []
        for fold_idx, held_out in enumerate(folds):
            train_mask = np.ones(len(train), dtype=bool)
            train_mask[held_out] = False
            fit_idx = all_idx[train_mask]
            est = make_estimator(spec)
            est.fit(train.rows[fit_idx], train.labels[fit_idx])
            pred = est.predict(train.rows[held_out])
            acc = float((pred == train.labels[held_out]).mean())
            table.record(point_idx, params, fold_idx, acc)
            scores.append(acc)
        mean = sum(scores) / len(scores)
        if mean > best_mean:  # strict: ties keep the earlier grid point
            best_mean = mean
            best_idx = point_idx
    best_spec = ClassifierSpec.make(kind, points[best_idx], seed=spec_seed)
    return best_spec, table
