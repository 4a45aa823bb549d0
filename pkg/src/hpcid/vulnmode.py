"""Binary patched/unpatched detection workflow.

A case pairs lettered builds of one library around a patch: measurements
are acquired per version with version tags preserved, rows are relabeled
1 = unpatched / 0 = patched, and the standard binary pipeline reports
precision/recall/F1 alongside accuracy. Class imbalance (far fewer rows on
one side when the patch landed early or late in the letter sequence) is
surfaced in the report.
"""

import configparser
from dataclasses import dataclass

from .counters import SyntheticBackend, SyntheticProfile
from .dataset import relabel_binary
from .errors import ConfigError
from .harness import AcquisitionPlan, acquire
from .pipeline import PipelineConfig, run_pipeline
from .workloads import DEFAULT_LEN_RANGE, WorkloadSpec


@dataclass(frozen=True)
class CaseVersion:
    tag: str
    patched: bool
    library: str = ""  # shared-object path; empty for synthetic/replay runs


@dataclass
class VulnCase:
    """One vulnerability: the affected entry point and the lettered builds
    on both sides of the patch."""

    case_id: str
    target_symbol: str
    versions: list
    input_policy: str = "random_length"
    input_len_range: tuple = DEFAULT_LEN_RANGE
    signature: str = "buf_len"

    def __post_init__(self):
        patched = [v for v in self.versions if v.patched]
        unpatched = [v for v in self.versions if not v.patched]
        if not patched or not unpatched:
            raise ConfigError(
                f"case {self.case_id!r} needs at least one patched and one "
                f"unpatched version (got {len(patched)} patched, {len(unpatched)} unpatched)"
            )
        tags = [v.tag for v in self.versions]
        if len(set(tags)) != len(tags):
            raise ConfigError(f"case {self.case_id!r} has duplicate version tags")

    @property
    def unpatched_tags(self):
        return {v.tag for v in self.versions if not v.patched}

    @property
    def patched_tags(self):
        return {v.tag for v in self.versions if v.patched}


def load_case(path) -> VulnCase:
    """Case file: a ``[case]`` section (id, symbol, signature, input_policy,
    input_len_range) plus one ``[version:<tag>]`` section per build with
    ``patched`` and optional ``library``."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read case file {path!r}")
    if "case" not in parser:
        raise ConfigError(f"{path!r} has no [case] section")
    sec = parser["case"]
    versions = []
    for section in parser.sections():
        if not section.startswith("version:"):
            continue
        tag = section.split(":", 1)[1]
        vsec = parser[section]
        if "patched" not in vsec:
            raise ConfigError(f"version {tag!r} must state patched = true/false")
        versions.append(
            CaseVersion(
                tag=tag,
                patched=vsec.getboolean("patched"),
                library=vsec.get("library", ""),
            )
        )
    rng_txt = sec.get("input_len_range", "")
    if rng_txt:
        parts = [p.strip() for p in rng_txt.split(",")]
        len_range = (int(parts[0]), int(parts[1]))
    else:
        len_range = DEFAULT_LEN_RANGE
    return VulnCase(
        case_id=sec.get("id", "case"),
        target_symbol=sec.get("symbol", ""),
        versions=versions,
        input_policy=sec.get("input_policy", "random_length"),
        input_len_range=len_range,
        signature=sec.get("signature", "buf_len"),
    )


def case_workloads(case: VulnCase, seed=0):
    """One workload per version, tagged by version; dynamic versions invoke
    the case symbol, others fall back to stub targets (synthetic/replay)."""
    specs = []
    for i, version in enumerate(case.versions):
        if version.library:
            specs.append(
                WorkloadSpec(
                    id=i,
                    name=f"{case.case_id}:{version.tag}",
                    kind="dynamic_symbol",
                    input_policy=case.input_policy,
                    input_len_range=case.input_len_range,
                    seed=seed,
                    tag=version.tag,
                    library=version.library,
                    symbol=case.target_symbol,
                    signature=case.signature,
                )
            )
        else:
            specs.append(
                WorkloadSpec(
                    id=i,
                    name=f"stub{i:02d}",
                    input_policy=case.input_policy,
                    input_len_range=(8, 32),
                    seed=seed,
                    tag=version.tag,
                )
            )
    return specs


def run_case(
    case: VulnCase,
    backend,
    instances_per_version=100,
    events=None,
    warmup_executions=10,
    acquire_seed=0,
    config: PipelineConfig = None,
):
    """Acquire per-version measurements, relabel binary, run the pipeline.

    Returns (EvalReport, dataset). The report's provenance carries the
    patched/unpatched row counts so imbalance is visible.
    """
    if config is None:
        config = PipelineConfig()
    plan = AcquisitionPlan(
        workloads=case_workloads(case, seed=acquire_seed),
        events=list(events) if events is not None else backend.catalog(),
        instances_per_class=instances_per_version,
        warmup_executions=warmup_executions,
        seed=acquire_seed,
        tag=case.case_id,
    )
    data = acquire(plan, backend)
    binary = relabel_binary(data, positive_tags=case.unpatched_tags,
                            negative_tags=case.patched_tags)
    n_unpatched = int((binary.labels == 1).sum())
    n_patched = int((binary.labels == 0).sum())
    config.provenance = dict(config.provenance)
    config.provenance.update(
        {
            "case_id": case.case_id,
            "patched_rows": str(n_patched),
            "unpatched_rows": str(n_unpatched),
        }
    )
    result = run_pipeline(binary, config)
    report = result.report
    if n_patched != n_unpatched:
        report.flags.append(
            f"unbalanced case: {n_unpatched} unpatched vs {n_patched} patched rows"
        )
    return report, binary


def synthetic_demo_case(
    n_unpatched=2,
    n_patched=3,
    events=None,
    base=10000.0,
    noise_cv=0.02,
    shift_sigmas=3.0,
    shifted_events=2,
    seed=0,
):
    """A ready-made synthetic case: unpatched builds shift the means of a
    couple of events by a few noise standard deviations, mimicking the
    counter-visible footprint of a code change.

    Returns (VulnCase, SyntheticBackend).
    """
    if events is None:
        events = [f"EV{i:02d}" for i in range(8)]
    if not (0 < shifted_events <= len(events)):
        raise ConfigError("shifted_events must be within the event list")
    patched_base = {e: base * (1.0 + 0.05 * i) for i, e in enumerate(events)}
    unpatched_base = dict(patched_base)
    for e in events[:shifted_events]:
        sigma = noise_cv * patched_base[e]
        unpatched_base[e] = patched_base[e] + shift_sigmas * sigma
    versions = []
    letters = "abcdefghijklmnopqrstuvwxyz"
    for i in range(n_unpatched):
        versions.append(CaseVersion(tag=f"v1.0.2{letters[i]}", patched=False))
    for i in range(n_patched):
        versions.append(CaseVersion(tag=f"v1.0.2{letters[n_unpatched + i]}", patched=True))
    case = VulnCase(
        case_id="demo-two-event-shift",
        target_symbol="",
        versions=versions,
        input_len_range=(8, 32),
    )
    profiles = []
    for i, version in enumerate(case.versions):
        bases = patched_base if version.patched else unpatched_base
        profiles.append(
            SyntheticProfile(
                class_id=i,
                per_event_base=dict(bases),
                noise_cv=noise_cv,
                separation=0.0,
                seed=seed,
            )
        )
    backend = SyntheticBackend(profiles, events=list(events))
    return case, backend
