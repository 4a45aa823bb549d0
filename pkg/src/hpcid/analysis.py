"""Feature analysis: Pearson correlation matrices, Shapley-value
attributions, and top-N feature-elimination retraining.

Attributions explain the model's predicted-class probability for each
instance, marginalizing removed features over a background sample
(interventional conditional expectations). Exact mode enumerates all
feature subsets with the classic combinatorial weights; sampled mode is an
unbiased permutation-sampling estimator of the same quantity.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .classifiers import TrainedModel
from .classifiers import predict_proba as _model_proba
from .dataset import Dataset
from .errors import HpcIdError, SchemaMismatchError
from .pipeline import PipelineConfig, run_pipeline
from .validation import as_float_matrix

EXACT_FEATURE_LIMIT = 12  # 4096 subsets; beyond this use sampled mode


# ---------------------------------------------------------------------------
# Pearson correlation


@dataclass
class CorrelationMatrix:
    schema: list
    values: np.ndarray  # NaN where undefined
    undefined_pairs: set  # frozenset pairs of event names

    def lookup(self, a, b):
        return float(self.values[self.schema.index(a), self.schema.index(b)])


def correlate(data) -> CorrelationMatrix:
    """Pairwise Pearson coefficients over raw feature columns.

    Pairs involving a zero-variance column are undefined (NaN) rather than
    zero. The matrix is exactly symmetric by construction.
    """
    X = data.rows if isinstance(data, Dataset) else as_float_matrix(data)
    schema = list(data.schema) if isinstance(data, Dataset) else [
        f"f{i}" for i in range(X.shape[1])
    ]
    n, m = X.shape
    if n < 2:
        raise HpcIdError("correlation needs at least 2 rows")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / n
    std = np.sqrt(np.diag(cov))
    constant = std == 0.0
    values = np.full((m, m), np.nan)
    undefined = set()
    for i in range(m):
        if constant[i]:
            undefined.add(frozenset((schema[i],)))
            continue
        values[i, i] = 1.0
        for j in range(i + 1, m):
            if constant[j]:
                continue
            r = cov[i, j] / (std[i] * std[j])
            r = min(1.0, max(-1.0, float(r)))
            values[i, j] = r
            values[j, i] = r
    for i in range(m):
        for j in range(m):
            if i != j and (constant[i] or constant[j]):
                undefined.add(frozenset((schema[i], schema[j])))
    return CorrelationMatrix(schema=schema, values=values, undefined_pairs=undefined)


def render_correlation_text(corr: CorrelationMatrix, provenance=None) -> str:
    lines = [f"# {k} = {v}" for k, v in sorted((provenance or {}).items())]
    lines.append("event\t" + "\t".join(corr.schema))
    for i, name in enumerate(corr.schema):
        cells = []
        for v in corr.values[i]:
            cells.append("undef" if np.isnan(v) else f"{v:+.4f}")
        lines.append(name + "\t" + "\t".join(cells))
    if corr.undefined_pairs:
        names = sorted(",".join(sorted(p)) for p in corr.undefined_pairs)
        lines.append("# undefined pairs: " + "; ".join(names))
    return "\n".join(lines) + "\n"


def render_correlation_heatmap(corr: CorrelationMatrix, path, provenance=None):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .evaluation import _png_metadata

    m = len(corr.schema)
    fig, ax = plt.subplots(figsize=(max(4.0, m * 0.3 + 2.0),) * 2, dpi=110)
    im = ax.imshow(np.nan_to_num(corr.values), cmap="RdBu_r", vmin=-1.0, vmax=1.0)
    ticks = list(range(m))
    ax.set_xticks(ticks, corr.schema, rotation=90, fontsize=7)
    ax.set_yticks(ticks, corr.schema, fontsize=7)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, metadata=_png_metadata(provenance))
    plt.close(fig)
    return str(path)


# ---------------------------------------------------------------------------
# Shapley attributions


def _proba(model, X):
    X = np.asarray(X, dtype=np.float64)
    if isinstance(model, TrainedModel):
        return _model_proba(model, X)
    return np.asarray(model.predict_proba(X), dtype=np.float64)


def _target_index(model, x):
    """Column of predict_proba explained for this instance: the class the
    model assigns to the full feature vector."""
    proba = _proba(model, x.reshape(1, -1))[0]
    return int(np.argmax(proba))


def value_function(model, x, subset, background):
    """v(S): mean predicted-class probability over background rows with the
    features in ``subset`` pinned to ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    background = as_float_matrix(background)
    if background.shape[1] != x.shape[0]:
        raise SchemaMismatchError(
            f"background width {background.shape[1]} != instance width {x.shape[0]}"
        )
    subset = sorted(int(i) for i in subset)
    if subset and (subset[0] < 0 or subset[-1] >= x.shape[0]):
        raise HpcIdError(f"subset {subset} outside feature range")
    target = _target_index(model, x)
    composite = background.copy()
    if subset:
        composite[:, subset] = x[subset]
    return float(_proba(model, composite)[:, target].mean())


def _subset_values(model, x, background, target, batch_masks=256):
    """v(S) for every subset mask of the feature universe, batched."""
    m = x.shape[0]
    n_subsets = 1 << m
    b = background.shape[0]
    values = np.empty(n_subsets)
    cols_of = [np.flatnonzero([(mask >> i) & 1 for i in range(m)]) for mask in range(n_subsets)]
    for start in range(0, n_subsets, batch_masks):
        masks = range(start, min(start + batch_masks, n_subsets))
        stack = np.tile(background, (len(masks), 1))
        for row_block, mask in enumerate(masks):
            cols = cols_of[mask]
            if cols.size:
                stack[row_block * b:(row_block + 1) * b, cols] = x[cols]
        proba = _proba(model, stack)[:, target]
        values[start:start + len(masks)] = proba.reshape(len(masks), b).mean(axis=1)
    return values


def shapley_exact(model, x, background):
    """Per-feature attributions by full subset enumeration.

    Limited to 12 features (4096 subsets); larger universes must use
    :func:`shapley_sampled`.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    background = as_float_matrix(background)
    m = x.shape[0]
    if m > EXACT_FEATURE_LIMIT:
        raise HpcIdError(
            f"exact mode enumerates 2^{m} subsets; use sampled mode above "
            f"{EXACT_FEATURE_LIMIT} features"
        )
    if background.shape[1] != m:
        raise SchemaMismatchError("background width differs from instance width")
    target = _target_index(model, x)
    values = _subset_values(model, x, background, target)
    fact = [math.factorial(i) for i in range(m + 1)]
    weight = np.array([fact[s] * fact[m - s - 1] / fact[m] for s in range(m)])
    popcount = np.array([bin(mask).count("1") for mask in range(1 << m)])
    all_masks = np.arange(1 << m)
    phi = np.zeros(m)
    for i in range(m):
        bit = 1 << i
        without = all_masks[(all_masks & bit) == 0]
        phi[i] = float(
            (weight[popcount[without]] * (values[without | bit] - values[without])).sum()
        )
    return phi, float(values[0]), float(values[-1])


def shapley_sampled(model, x, background, permutations=2000, seed=0):
    """Unbiased permutation-sampling estimate of the exact attributions.

    Each sampled ordering inserts features one by one and accrues their
    marginal contributions; deterministic under ``seed``.
    """
    if permutations < 1:
        raise HpcIdError("permutations must be at least 1")
    x = np.asarray(x, dtype=np.float64).ravel()
    background = as_float_matrix(background)
    m = x.shape[0]
    if background.shape[1] != m:
        raise SchemaMismatchError("background width differs from instance width")
    b = background.shape[0]
    target = _target_index(model, x)
    v_empty = float(_proba(model, background)[:, target].mean())
    v_full = float(_proba(model, x.reshape(1, -1))[0, target])
    rng = np.random.default_rng(seed)
    phi = np.zeros(m)
    for _ in range(permutations):
        order = rng.permutation(m)
        composite = background.copy()
        stages = np.empty((m * b, m))
        for step, f in enumerate(order):
            composite[:, f] = x[f]
            stages[step * b:(step + 1) * b] = composite
        stage_values = _proba(model, stages)[:, target].reshape(m, b).mean(axis=1)
        prev = v_empty
        for step, f in enumerate(order):
            phi[f] += stage_values[step] - prev
            prev = stage_values[step]
    return phi / permutations, v_empty, v_full


@dataclass
class ShapleyReport:
    """Per-instance attributions plus the global mean-|phi| ranking."""

    schema: list
    per_instance_phi: np.ndarray  # instances x features
    global_importance: np.ndarray
    ranking: list  # event names, descending importance, ties by schema order
    mode: str
    background_size: int
    permutations: int
    value_baseline: np.ndarray  # v(empty) per instance
    value_full: np.ndarray  # v(all features) per instance
    provenance: dict = field(default_factory=dict)

    @property
    def max_efficiency_gap(self):
        """max |sum(phi) - (v(full) - v(empty))| across instances."""
        gaps = np.abs(
            self.per_instance_phi.sum(axis=1) - (self.value_full - self.value_baseline)
        )
        return float(gaps.max()) if len(gaps) else 0.0


def global_importance(
    model,
    explain_rows,
    background,
    schema=None,
    mode="auto",
    permutations=2000,
    seed=0,
    provenance=None,
) -> ShapleyReport:
    """Mean absolute attribution per feature across the explained rows."""
    explain_rows = as_float_matrix(explain_rows)
    background = as_float_matrix(background)
    n, m = explain_rows.shape
    if n == 0:
        raise HpcIdError("need at least one row to explain")
    if schema is None:
        schema = (
            list(model.schema)
            if isinstance(model, TrainedModel)
            else [f"f{i}" for i in range(m)]
        )
    if mode == "auto":
        mode = "exact" if m <= EXACT_FEATURE_LIMIT else "sampled"
    if mode not in ("exact", "sampled"):
        raise HpcIdError(f"unknown attribution mode {mode!r}")
    phis = np.empty((n, m))
    v0 = np.empty(n)
    v1 = np.empty(n)
    for i, x in enumerate(explain_rows):
        if mode == "exact":
            phis[i], v0[i], v1[i] = shapley_exact(model, x, background)
        else:
            phis[i], v0[i], v1[i] = shapley_sampled(
                model, x, background, permutations=permutations, seed=seed + i
            )
    importance = np.abs(phis).mean(axis=0)
    order = sorted(range(m), key=lambda j: (-importance[j], j))
    return ShapleyReport(
        schema=list(schema),
        per_instance_phi=phis,
        global_importance=importance,
        ranking=[schema[j] for j in order],
        mode=mode,
        background_size=background.shape[0],
        permutations=permutations if mode == "sampled" else 0,
        value_baseline=v0,
        value_full=v1,
        provenance=dict(provenance or {}),
    )


def sample_background(train: Dataset, size=32, seed=0):
    """Stratified background rows drawn from the training split."""
    return train.select_rows(_stratified_sample(train.labels, size, seed)).rows


def sample_explained(test: Dataset, size=200, seed=0):
    idx = _stratified_sample(test.labels, size, seed)
    return test.select_rows(idx)


def _stratified_sample(labels, size, seed):
    labels = np.asarray(labels)
    n = len(labels)
    size = min(size, n)
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    picked = []
    per_class = max(1, size // len(classes))
    for c in classes:
        idx = np.flatnonzero(labels == c)
        take = min(per_class, len(idx))
        picked.extend(rng.choice(idx, size=take, replace=False).tolist())
    short = size - len(picked)
    if short > 0:
        rest = np.setdiff1d(np.arange(n), np.array(picked))
        picked.extend(rng.choice(rest, size=min(short, len(rest)), replace=False).tolist())
    return np.array(sorted(picked[:size]), dtype=np.int64)


def render_shapley_text(report: ShapleyReport) -> str:
    lines = [f"# {k} = {v}" for k, v in sorted(report.provenance.items())]
    lines.append(
        f"mode = {report.mode}; background = {report.background_size}; "
        f"explained = {report.per_instance_phi.shape[0]}"
        + (f"; permutations = {report.permutations}" if report.mode == "sampled" else "")
    )
    lines.append("rank\tevent\tmean_abs_phi")
    index = {name: i for i, name in enumerate(report.schema)}
    for rank, name in enumerate(report.ranking, start=1):
        lines.append(f"{rank}\t{name}\t{report.global_importance[index[name]]:.6g}")
    if report.mode == "exact":
        gap = report.max_efficiency_gap
        status = "holds" if gap <= 1e-9 else "VIOLATED"
        lines.append(
            f"# efficiency check: max |sum(phi) - (v(full) - v(empty))| = {gap:.3g} "
            f"(tolerance 1e-09): {status}"
        )
    return "\n".join(lines) + "\n"


def render_shapley_bars(report: ShapleyReport, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .evaluation import _png_metadata

    index = {name: i for i, name in enumerate(report.schema)}
    names = list(reversed(report.ranking))
    vals = [report.global_importance[index[n]] for n in names]
    fig, ax = plt.subplots(figsize=(6, max(3.0, 0.3 * len(names))), dpi=110)
    ax.barh(range(len(names)), vals)
    ax.set_yticks(range(len(names)), names, fontsize=7)
    ax.set_xlabel("mean |phi|")
    fig.tight_layout()
    fig.savefig(path, metadata=_png_metadata(report.provenance))
    plt.close(fig)
    return str(path)


# ---------------------------------------------------------------------------
# Feature elimination


def eliminate_and_retrain(data: Dataset, ranking, ns, config: PipelineConfig):
    """Rerun the whole pipeline on the top-N ranked features for each N,
    plus an all-features baseline row. Restriction preserves the original
    schema order, so N = M reproduces the baseline bit-exactly."""
    m = data.n_features
    for n in ns:
        if not (1 <= int(n) <= m):
            raise HpcIdError(f"top-N value {n} outside [1, {m}]")
    missing = [r for r in ranking if r not in data.schema]
    if missing:
        raise SchemaMismatchError(f"ranking names unknown events: {missing}")
    rows = []
    for n in list(ns) + ["all"]:
        if n == "all":
            subset = data
            kept = list(data.schema)
        else:
            kept = ranking[: int(n)]
            subset = data.select_features(kept)
        result = run_pipeline(subset, config)
        rows.append(
            {
                "n": n,
                "events": list(subset.schema),
                "accuracy": result.report.accuracy,
                "cv_score": result.model.cv_score,
            }
        )
    return rows


def render_elimination_text(rows, provenance=None) -> str:
    lines = [f"# {k} = {v}" for k, v in sorted((provenance or {}).items())]
    lines.append("top_n\taccuracy\tcv_score\tevents")
    for row in rows:
        lines.append(
            f"{row['n']}\t{row['accuracy']:.6f}\t{row['cv_score']:.6f}\t"
            + ",".join(row["events"])
        )
    return "\n".join(lines) + "\n"
