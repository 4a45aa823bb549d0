"""Command-line pipeline orchestration.

One executable with subcommands covering the full flow: acquire, train,
evaluate, confusion, correlate, shap, eliminate, vuln, and a bundled
walkthrough that chains them on a synthetic backend. Exit codes are
machine-readable: 0 ok, 2 usage/config, 3 environment or backend, 4 data.
"""

import argparse
import configparser
import hashlib
import os
import sys
from dataclasses import dataclass, field

from . import analysis, dataset as ds, evaluation, vulnmode
from .classifiers import KINDS, load_model, save_model
from .counters import ReplayBackend, load_synthetic_config
from .errors import (
    AcquisitionError,
    BackendUnavailableError,
    ConfigError,
    DatasetFormatError,
    HpcIdError,
    MeasurementError,
    PrivilegeError,
    SchemaMismatchError,
    UnknownEventError,
    WorkloadError,
)
from .harness import AcquisitionPlan, acquire
from .pipeline import PipelineConfig, run_pipeline
from .workloads import builtin_suite, load_suite, stub_suite

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ENVIRONMENT = 3
EXIT_DATA = 4

OUT_ENV_VAR = "HPCID_OUT"

_WALKTHROUGH = os.path.join(os.path.dirname(__file__), "configs", "walkthrough.ini")


@dataclass
class ExperimentConfig:
    """Parsed experiment file plus its provenance hash."""

    path: str
    parser: configparser.ConfigParser
    sha256: str
    seeds: dict = field(default_factory=dict)

    def section(self, name):
        return self.parser[name] if name in self.parser else None

    def get(self, section, key, fallback=None):
        sec = self.section(section)
        if sec is None:
            return fallback
        return sec.get(key, fallback)

    def provenance(self):
        prov = {"config_sha256": self.sha256}
        for name, value in sorted(self.seeds.items()):
            prov[f"seed_{name}"] = str(value)
        return prov


def load_experiment(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    parser = configparser.ConfigParser()
    parser.read_string(raw.decode("utf-8"), source=str(path))
    seeds = {"acquire": 0, "split": 0, "train": 0, "shap": 0, "cv": 0}
    if "seeds" in parser:
        for key in seeds:
            seeds[key] = parser["seeds"].getint(key, seeds[key])
        if "cv" not in parser["seeds"] and "split" in parser["seeds"]:
            seeds["cv"] = seeds["split"]
    cfg = ExperimentConfig(
        path=str(path),
        parser=parser,
        sha256=hashlib.sha256(raw).hexdigest(),
        seeds=seeds,
    )
    _validate_referenced_files(cfg)
    return cfg


def _validate_referenced_files(cfg):
    refs = []
    for section, key in (
        ("replay", "dataset"),
        ("train", "grid"),
        ("plan", "workloads_file"),
        ("vuln", "case"),
    ):
        value = cfg.get(section, key)
        if value:
            refs.append(value)
    for ref in refs:
        if not os.path.exists(ref):
            raise ConfigError(f"referenced file does not exist: {ref!r}")


def _build_backend(cfg: ExperimentConfig, override=None):
    kind = override or cfg.get("experiment", "backend", "synthetic")
    if kind == "synthetic":
        if cfg.section("synthetic") is None:
            raise ConfigError("config has no [synthetic] section")
        return load_synthetic_config(cfg.path)
    if kind == "replay":
        path = cfg.get("replay", "dataset")
        if not path:
            raise ConfigError("replay backend needs [replay] dataset = <path>")
        return ReplayBackend(ds.load(path))
    if kind == "os":
        from .perf_linux import PerfEventBackend

        sec = cfg.section("os")
        cpu = int(sec.get("cpu", "0")) if sec else 0
        exclude = sec.getboolean("exclude_kernel", True) if sec else True
        return PerfEventBackend(cpu=cpu, exclude_kernel=exclude)
    raise ConfigError(f"unknown backend {kind!r}; choose os, synthetic, or replay")


def _build_workloads(cfg: ExperimentConfig, backend):
    sec = cfg.section("plan")
    suite = sec.get("workloads", "stub") if sec else "stub"
    seed = cfg.seeds["acquire"]
    if suite == "builtin":
        return builtin_suite(seed=seed)
    if suite == "stub":
        classes = 2
        if cfg.section("synthetic") is not None:
            classes = cfg.parser["synthetic"].getint("classes", 2)
        return stub_suite(classes, seed=seed)
    path = cfg.get("plan", "workloads_file")
    if path:
        return load_suite(path)
    raise ConfigError(f"unknown workload suite {suite!r}")


def _build_plan(cfg: ExperimentConfig, backend):
    sec = cfg.section("plan")
    if sec is None:
        raise ConfigError("config has no [plan] section")
    events = backend.catalog()
    if sec.get("events", "").strip():
        wanted = [e.strip() for e in sec["events"].split(",") if e.strip()]
        by_name = {e.name: e for e in events}
        missing = [w for w in wanted if w not in by_name]
        if missing:
            raise UnknownEventError(f"plan events not in backend catalog: {missing}")
        events = [by_name[w] for w in wanted]
    return AcquisitionPlan(
        workloads=_build_workloads(cfg, backend),
        events=events,
        instances_per_class=sec.getint("instances_per_class", 50),
        warmup_executions=sec.getint("warmup_executions", 10),
        seed=cfg.seeds["acquire"],
        tag=sec.get("tag", ""),
    )


def _parse_grid_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("none", "null"):
        return None
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def load_grid(path, kind):
    """Grid file: a ``[<kind>]`` section of ``param = v1, v2, ...`` lines."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read grid file {path!r}")
    if kind not in parser:
        raise ConfigError(f"grid file {path!r} has no [{kind}] section")
    grid = {}
    for key, value in parser[kind].items():
        grid[key] = [_parse_grid_value(v) for v in value.split(",")]
    return grid


def _pipeline_config(cfg: ExperimentConfig, args):
    kind = getattr(args, "classifier", None) or cfg.get("train", "classifier", "random_forest")
    if kind not in KINDS:
        raise ConfigError(f"unknown classifier kind {kind!r}; choose from {sorted(KINDS)}")
    grid_path = getattr(args, "grid", None) or cfg.get("train", "grid")
    grid = load_grid(grid_path, kind) if grid_path else None
    if grid is None and cfg.section("grid:" + kind) is not None:
        grid = {
            key: [_parse_grid_value(v) for v in value.split(",")]
            for key, value in cfg.parser["grid:" + kind].items()
        }
    folds = getattr(args, "folds", None) or int(cfg.get("train", "folds", "10"))
    ratio = float(cfg.get("train", "ratio", "0.8"))
    return PipelineConfig(
        classifier=kind,
        grid=grid,
        folds=int(folds),
        split_ratio=ratio,
        split_seed=cfg.seeds["split"],
        cv_seed=cfg.seeds["cv"],
        train_seed=cfg.seeds["train"],
        provenance=cfg.provenance(),
    )


def _out_dir(cfg, args):
    out = getattr(args, "out", None) or cfg.get("experiment", "out") or os.environ.get(
        OUT_ENV_VAR, "."
    )
    os.makedirs(out, exist_ok=True)
    return out


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return path


# ---------------------------------------------------------------------------
# Subcommands


def cmd_acquire(args):
    cfg = load_experiment(args.config)
    if args.seed is not None:
        cfg.seeds["acquire"] = args.seed
    backend = _build_backend(cfg, args.backend)
    out = _out_dir(cfg, args)
    if isinstance(backend, ReplayBackend):
        data = backend.dataset()
    else:
        plan = _build_plan(cfg, backend)
        data = acquire(plan, backend, progress=True)
    data = data.with_meta(**cfg.provenance())
    path = os.path.join(out, "dataset.csv")
    ds.save(data, path)
    print(f"wrote {path} ({len(data)} rows x {data.n_features} events)")
    return EXIT_OK


def _load_dataset_arg(args, cfg):
    path = args.dataset or os.path.join(_out_dir(cfg, args), "dataset.csv")
    return ds.load(path)


def cmd_train(args):
    cfg = load_experiment(args.config)
    data = _load_dataset_arg(args, cfg)
    if (getattr(args, "task", None) or cfg.get("experiment", "task", "multiclass")) == "binary":
        if data.class_table != [0, 1]:
            raise ConfigError(
                "binary task needs a dataset relabeled to {0,1}; run the vuln command"
            )
    config = _pipeline_config(cfg, args)
    result = run_pipeline(data, config)
    out = _out_dir(cfg, args)
    model_path = os.path.join(out, "model.json")
    save_model(result.model, model_path)
    cv_path = _write(
        os.path.join(out, "cv_table.txt"),
        result.cv_table.to_text(provenance=cfg.provenance()),
    )
    print(
        f"best {result.best_spec.kind} {dict(result.best_spec.hyperparams)} "
        f"cv accuracy {result.model.cv_score:.4f}; wrote {model_path} and {cv_path}"
    )
    return EXIT_OK


def _rebuild_test_split(cfg, args, data, model):
    config = _pipeline_config(cfg, args)
    _, test = ds.split(data, ratio=config.split_ratio, seed=config.split_seed)
    return ds.apply_normalizer(model.normalizer, test)


def cmd_evaluate(args):
    cfg = load_experiment(args.config)
    data = _load_dataset_arg(args, cfg)
    model = load_model(args.model or os.path.join(_out_dir(cfg, args), "model.json"))
    test = _rebuild_test_split(cfg, args, data, model)
    report = evaluation.score(model, test, provenance=cfg.provenance())
    out = _out_dir(cfg, args)
    path = _write(os.path.join(out, "evaluation.txt"), evaluation.render_text(report))
    print(f"accuracy {report.accuracy:.4f}; wrote {path}")
    return EXIT_OK


def cmd_confusion(args):
    cfg = load_experiment(args.config)
    data = _load_dataset_arg(args, cfg)
    model = load_model(args.model or os.path.join(_out_dir(cfg, args), "model.json"))
    test = _rebuild_test_split(cfg, args, data, model)
    report = evaluation.score(model, test, provenance=cfg.provenance())
    out = _out_dir(cfg, args)
    txt = _write(os.path.join(out, "confusion.txt"), evaluation.render_text(report))
    png = evaluation.render_heatmap(report, os.path.join(out, "confusion.png"))
    print(f"wrote {txt} and {png['path']}")
    return EXIT_OK


def cmd_correlate(args):
    cfg = load_experiment(args.config)
    data = _load_dataset_arg(args, cfg)
    corr = analysis.correlate(data)
    out = _out_dir(cfg, args)
    txt = _write(
        os.path.join(out, "correlation.txt"),
        analysis.render_correlation_text(corr, provenance=cfg.provenance()),
    )
    png = analysis.render_correlation_heatmap(
        corr, os.path.join(out, "correlation.png"), provenance=cfg.provenance()
    )
    print(f"wrote {txt} and {png}")
    return EXIT_OK


def cmd_shap(args):
    cfg = load_experiment(args.config)
    data = _load_dataset_arg(args, cfg)
    model = load_model(args.model or os.path.join(_out_dir(cfg, args), "model.json"))
    config = _pipeline_config(cfg, args)
    train, test = ds.split(data, ratio=config.split_ratio, seed=config.split_seed)
    train_n = ds.apply_normalizer(model.normalizer, train)
    test_n = ds.apply_normalizer(model.normalizer, test)
    sec = cfg.section("shap")
    background_size = args.background or (sec.getint("background", 32) if sec else 32)
    explain_size = sec.getint("explain", 200) if sec else 200
    permutations = args.permutations or (sec.getint("permutations", 2000) if sec else 2000)
    mode = sec.get("mode", "auto") if sec else "auto"
    shap_seed = cfg.seeds["shap"]
    background = analysis.sample_background(train_n, size=background_size, seed=shap_seed)
    explained = analysis.sample_explained(test_n, size=explain_size, seed=shap_seed)
    report = analysis.global_importance(
        model,
        explained.rows,
        background,
        schema=model.schema,
        mode=mode,
        permutations=permutations,
        seed=shap_seed,
        provenance=cfg.provenance(),
    )
    out = _out_dir(cfg, args)
    txt = _write(os.path.join(out, "shap.txt"), analysis.render_shapley_text(report))
    png = analysis.render_shapley_bars(report, os.path.join(out, "shap.png"))
    print(f"top event: {report.ranking[0]}; wrote {txt} and {png}")
    return EXIT_OK


def _parse_top_n(text, m):
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part or part == "all":
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    return [n for n in values if 1 <= n <= m]


def cmd_eliminate(args):
    cfg = load_experiment(args.config)
    data = _load_dataset_arg(args, cfg)
    model = load_model(args.model or os.path.join(_out_dir(cfg, args), "model.json"))
    config = _pipeline_config(cfg, args)
    train, test = ds.split(data, ratio=config.split_ratio, seed=config.split_seed)
    train_n = ds.apply_normalizer(model.normalizer, train)
    test_n = ds.apply_normalizer(model.normalizer, test)
    shap_seed = cfg.seeds["shap"]
    sec = cfg.section("shap")
    background = analysis.sample_background(
        train_n, size=(sec.getint("background", 32) if sec else 32), seed=shap_seed
    )
    explained = analysis.sample_explained(
        test_n, size=(sec.getint("explain", 200) if sec else 200), seed=shap_seed
    )
    shap_report = analysis.global_importance(
        model, explained.rows, background, schema=model.schema, seed=shap_seed,
        permutations=args.permutations or 2000,
    )
    spec_text = args.top_n or cfg.get("eliminate", "top_n", "1-10")
    ns = _parse_top_n(spec_text, data.n_features)
    rows = analysis.eliminate_and_retrain(data, shap_report.ranking, ns, config)
    out = _out_dir(cfg, args)
    path = _write(
        os.path.join(out, "elimination.txt"),
        analysis.render_elimination_text(rows, provenance=cfg.provenance()),
    )
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_vuln(args):
    cfg = load_experiment(args.config)
    case_path = args.case or cfg.get("vuln", "case")
    if case_path:
        case = vulnmode.load_case(case_path)
        backend = _build_backend(cfg, args.backend)
    else:
        case, backend = vulnmode.synthetic_demo_case(seed=cfg.seeds["acquire"])
    sec = cfg.section("vuln")
    instances = sec.getint("instances_per_version", 100) if sec else 100
    config = _pipeline_config(cfg, args)
    report, binary = vulnmode.run_case(
        case,
        backend,
        instances_per_version=instances,
        acquire_seed=cfg.seeds["acquire"],
        config=config,
    )
    out = _out_dir(cfg, args)
    ds.save(binary, os.path.join(out, "vuln_dataset.csv"))
    path = _write(os.path.join(out, "vuln_report.txt"), evaluation.render_text(report))
    b = report.binary_metrics
    print(
        f"case {case.case_id}: accuracy {report.accuracy:.4f} "
        f"precision {b['precision'] if b['precision'] is None else round(b['precision'], 4)} "
        f"recall {b['recall'] if b['recall'] is None else round(b['recall'], 4)}; wrote {path}"
    )
    return EXIT_OK


def cmd_walkthrough(args):
    """Chain the whole pipeline on the bundled synthetic config."""
    config_path = args.config or _WALKTHROUGH
    ns = argparse.Namespace(
        config=config_path, backend=None, seed=None, out=args.out, dataset=None,
        model=None, classifier=None, grid=None, folds=None, task=None,
        background=None, permutations=None, top_n=None, case=None,
    )
    cfg = load_experiment(config_path)
    out = _out_dir(cfg, ns)
    ns.out = out
    cmd_acquire(ns)
    ns.dataset = os.path.join(out, "dataset.csv")
    cmd_train(ns)
    ns.model = os.path.join(out, "model.json")
    cmd_evaluate(ns)
    cmd_confusion(ns)
    cmd_correlate(ns)
    cmd_shap(ns)
    cmd_eliminate(ns)
    cmd_vuln(ns)
    print(f"walkthrough complete; artifacts in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hpcid",
        description="Fingerprint black-box functions from hardware counter side effects.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=False, model=False):
        p.add_argument("--config", required=False, help="experiment INI file")
        p.add_argument("--backend", choices=["os", "synthetic", "replay"], default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help=f"output dir (or ${OUT_ENV_VAR})")
        if dataset:
            p.add_argument("--dataset", default=None, help="dataset CSV path")
        if model:
            p.add_argument("--model", default=None, help="trained model path")

    p = sub.add_parser("acquire", help="measure a dataset")
    common(p)
    p.set_defaults(func=cmd_acquire)

    p = sub.add_parser("train", help="grid-search and fit the best classifier")
    common(p, dataset=True)
    p.add_argument("--classifier", choices=sorted(KINDS), default=None)
    p.add_argument("--grid", default=None, help="grid INI file")
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--task", choices=["multiclass", "binary"], default=None)
    p.set_defaults(func=cmd_train)

    for name, fn in (("evaluate", cmd_evaluate), ("confusion", cmd_confusion)):
        p = sub.add_parser(name, help=f"{name} a trained model on the test split")
        common(p, dataset=True, model=True)
        p.add_argument("--classifier", default=None)
        p.add_argument("--grid", default=None)
        p.add_argument("--folds", type=int, default=None)
        p.set_defaults(func=fn)

    p = sub.add_parser("correlate", help="pairwise event correlation matrix")
    common(p, dataset=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("shap", help="global feature importances")
    common(p, dataset=True, model=True)
    p.add_argument("--classifier", default=None)
    p.add_argument("--grid", default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--background", type=int, default=None)
    p.add_argument("--permutations", type=int, default=None)
    p.set_defaults(func=cmd_shap)

    p = sub.add_parser("eliminate", help="retrain on top-N ranked events")
    common(p, dataset=True, model=True)
    p.add_argument("--classifier", default=None)
    p.add_argument("--grid", default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--top-n", dest="top_n", default=None, help="e.g. 1-10 or 1,3,5")
    p.add_argument("--permutations", type=int, default=None)
    p.set_defaults(func=cmd_eliminate)

    p = sub.add_parser("vuln", help="binary patched/unpatched case")
    common(p)
    p.add_argument("--case", default=None, help="case INI file")
    p.add_argument("--classifier", default=None)
    p.add_argument("--grid", default=None)
    p.add_argument("--folds", type=int, default=None)
    p.set_defaults(func=cmd_vuln)

    p = sub.add_parser("walkthrough", help="run the bundled synthetic demo end to end")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_walkthrough)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None and args.command != "walkthrough":
        parser.error(f"{args.command} requires --config")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BackendUnavailableError, PrivilegeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except (
        DatasetFormatError,
        SchemaMismatchError,
        AcquisitionError,
        MeasurementError,
        UnknownEventError,
        WorkloadError,
        HpcIdError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
