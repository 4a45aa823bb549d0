"""The standard learning pipeline: split, normalize on the training side,
grid-search with cross-validation, fit the winner, score the test split.

Factored out so experiments that rerun the pipeline under controlled
variations (feature elimination, binary relabeling) are bit-identical to
the direct path when given the same seeds.
"""

from dataclasses import dataclass, field

from . import dataset as ds
from .classifiers import DEFAULT_GRIDS, ClassifierSpec, fit_model, predict
from .errors import ConfigError
from .evaluation import evaluate_predictions
from .model_selection import grid_search


@dataclass
class PipelineConfig:
    """Seeds and knobs for one split/normalize/search/score run."""

    classifier: str = "random_forest"
    grid: dict = None  # None = the kind's default grid
    folds: int = 10
    split_ratio: float = 0.80
    split_seed: int = 0
    cv_seed: int = 0
    train_seed: int = 0
    provenance: dict = field(default_factory=dict)

    def resolved_grid(self):
        if self.grid is not None:
            return self.grid
        if self.classifier not in DEFAULT_GRIDS:
            raise ConfigError(f"unknown classifier kind {self.classifier!r}")
        return DEFAULT_GRIDS[self.classifier]


@dataclass
class PipelineResult:
    model: object
    report: object
    cv_table: object
    best_spec: ClassifierSpec
    train: object
    test: object


def run_pipeline(data, config: PipelineConfig) -> PipelineResult:
    """Run the full pipeline on a raw (unnormalized) dataset."""
    train, test = ds.split(
        data, ratio=config.split_ratio, seed=config.split_seed, stratified=True
    )
    norm = ds.fit_normalizer(train)
    train_n = ds.apply_normalizer(norm, train)
    test_n = ds.apply_normalizer(norm, test)
    best_spec, cv_table = grid_search(
        config.classifier,
        config.resolved_grid(),
        train_n,
        k=config.folds,
        seed=config.cv_seed,
        spec_seed=config.train_seed,
    )
    cv_score = cv_table.mean_accuracy(cv_table.best_point())
    model = fit_model(
        best_spec,
        train_n,
        normalizer=norm,
        cv_score=cv_score,
        provenance=dict(config.provenance),
    )
    names = None
    if "class_names" in data.meta:
        names = data.meta["class_names"].split(";")
    pred = predict(model, test_n.rows)
    report = evaluate_predictions(
        test_n.labels,
        pred,
        model.class_table,
        class_names=names,
        provenance=dict(config.provenance),
    )
    return PipelineResult(
        model=model,
        report=report,
        cv_table=cv_table,
        best_spec=best_spec,
        train=train_n,
        test=test_n,
    )
