"""Scoring and reporting: accuracy, binary precision/recall/F1, and
confusion matrices with row-normalized rendering.

Undefined metrics (zero denominators) are reported as None and flagged,
never as zero.
"""

from dataclasses import dataclass, field

import numpy as np

from .classifiers import TrainedModel, predict
from .errors import HpcIdError, SchemaMismatchError

@dataclass
class EvalReport:
    """Test-set scoring results for one model."""

    accuracy: float
    class_table: list
    confusion: np.ndarray  # counts, true class on rows
    per_class_support: list
    binary_metrics: dict = None  # {precision, recall, f1, positive_class} or None
    class_names: list = None
    flags: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def normalized_confusion(self):
        """Rows normalized by true-class support; all-zero rows stay zero
        and are flagged at construction."""
        conf = self.confusion.astype(np.float64)
        sums = conf.sum(axis=1, keepdims=True)
        return np.divide(conf, sums, out=np.zeros_like(conf), where=sums > 0)


def _binary_metrics(confusion, flags):
    # positive class is label 1 (the unpatched side)
    tn, fp = confusion[0, 0], confusion[0, 1]
    fn, tp = confusion[1, 0], confusion[1, 1]
    metrics = {"positive_class": 1, "tp": int(tp), "fp": int(fp), "fn": int(fn), "tn": int(tn)}
    if tp + fp > 0:
        metrics["precision"] = tp / (tp + fp)
    else:
        metrics["precision"] = None
        flags.append("precision undefined: no positive predictions")
    if tp + fn > 0:
        metrics["recall"] = tp / (tp + fn)
    else:
        metrics["recall"] = None
        flags.append("recall undefined: no positive rows")
    p, r = metrics["precision"], metrics["recall"]
    if p is None or r is None or (p + r) == 0:
        metrics["f1"] = None
        flags.append("f1 undefined")
    else:
        metrics["f1"] = 2 * p * r / (p + r)
    return metrics


def evaluate_predictions(y_true, y_pred, class_table, class_names=None, provenance=None):
    """Build an EvalReport from labels alone (model-independent path)."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise HpcIdError("prediction/label length mismatch")
    class_table = [int(c) for c in class_table]
    index = {c: i for i, c in enumerate(class_table)}
    unknown = sorted(set(y_true.tolist()) - set(class_table))
    if unknown:
        raise SchemaMismatchError(f"labels {unknown} not in model class table {class_table}")
    c = len(class_table)
    confusion = np.zeros((c, c), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[index[int(t)], index[int(p)]] += 1
    accuracy = float(np.trace(confusion) / confusion.sum())
    flags = []
    support = confusion.sum(axis=1)
    for i, s in enumerate(support):
        if s == 0:
            flags.append(f"class {class_table[i]} absent from the test set")
    binary = None
    if class_table == [0, 1]:
        binary = _binary_metrics(confusion, flags)
    return EvalReport(
        accuracy=accuracy,
        class_table=class_table,
        confusion=confusion,
        per_class_support=support.tolist(),
        binary_metrics=binary,
        class_names=class_names,
        flags=flags,
        provenance=dict(provenance or {}),
    )


def score(model: TrainedModel, test, provenance=None) -> EvalReport:
    """Score a normalized test dataset against a trained model."""
    if model.schema != test.schema:
        raise SchemaMismatchError(
            f"model schema {model.schema} != test schema {test.schema}"
        )
    names = None
    if "class_names" in test.meta:
        names = test.meta["class_names"].split(";")
    pred = predict(model, test.rows)
    return evaluate_predictions(
        test.labels, pred, model.class_table, class_names=names, provenance=provenance
    )


# ---------------------------------------------------------------------------
# Rendering


def _fmt_metric(v):
    return "undefined" if v is None else f"{v:.4f}"


def render_text(report: EvalReport, normalized=True) -> str:
    lines = []
    for key in sorted(report.provenance):
        lines.append(f"# {key} = {report.provenance[key]}")
    lines.append(f"accuracy = {report.accuracy:.6f}")
    lines.append(f"classes = {','.join(str(c) for c in report.class_table)}")
    lines.append(f"support = {','.join(str(s) for s in report.per_class_support)}")
    if report.binary_metrics is not None:
        b = report.binary_metrics
        lines.append(
            "binary: precision = %s, recall = %s, f1 = %s (positive class %d)"
            % (_fmt_metric(b["precision"]), _fmt_metric(b["recall"]),
               _fmt_metric(b["f1"]), b["positive_class"])
        )
    for flag in report.flags:
        lines.append(f"flag: {flag}")
    matrix = report.normalized_confusion if normalized else report.confusion
    title = "normalized confusion (rows = true class)" if normalized else "confusion counts"
    lines.append(title)
    header = "true\\pred\t" + "\t".join(str(c) for c in report.class_table)
    lines.append(header)
    for i, c in enumerate(report.class_table):
        if normalized:
            cells = "\t".join(f"{v:.4f}" for v in matrix[i])
        else:
            cells = "\t".join(str(int(v)) for v in matrix[i])
        lines.append(f"{c}\t{cells}")
    return "\n".join(lines) + "\n"


def render_heatmap(report: EvalReport, path, normalized=True):
    """Write a confusion heat map; returns render metadata for checks.

    Normalized maps span a fixed [0, 1] color scale. Tick labels are
    thinned above 20 classes so large matrices render without collisions.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matrix = report.normalized_confusion if normalized else report.confusion.astype(float)
    c = len(report.class_table)
    vmin, vmax = (0.0, 1.0) if normalized else (0.0, float(matrix.max() or 1.0))
    fig, ax = plt.subplots(figsize=(max(4.0, c * 0.16 + 2.0),) * 2, dpi=110)
    im = ax.imshow(matrix, cmap="viridis", vmin=vmin, vmax=vmax)
    step = max(1, c // 16)
    ticks = list(range(0, c, step))
    labels = [str(report.class_table[i]) for i in ticks]
    ax.set_xticks(ticks, labels, rotation=90 if c > 10 else 0, fontsize=7)
    ax.set_yticks(ticks, labels, fontsize=7)
    ax.set_xlabel("Predicted value")
    ax.set_ylabel("True value")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, metadata=_png_metadata(report.provenance))
    plt.close(fig)
    return {"path": str(path), "vmin": vmin, "vmax": vmax, "classes": c, "tick_step": step}


def _png_metadata(provenance):
    meta = {"Software": "hpcid"}
    if provenance:
        meta["Description"] = ";".join(f"{k}={v}" for k, v in sorted(provenance.items()))
    return meta


def report_render(report: EvalReport, fmt, path=None, normalized=True):
    """Render per the CLI contract: ``text`` returns a string, ``png``
    writes a heat map to ``path``."""
    if fmt == "text":
        return render_text(report, normalized=normalized)
    if fmt == "png":
        if path is None:
            raise HpcIdError("png rendering needs an output path")
        return render_heatmap(report, path, normalized=normalized)
    raise HpcIdError(f"unknown render format {fmt!r}")
