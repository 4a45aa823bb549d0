"""Acquisition orchestration: warm up each target, then sweep every
catalog event one execution at a time to assemble labeled feature vectors.

Acquisition is strictly single-threaded: one backend instance, one pinned
core, one armed counter per execution. Within an instance, feature j comes
from execution j of the sweep (one execution per event), so no two
features of a row ever share an execution.
"""

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .counters import EventDescriptor, ReplayBackend
from .dataset import Dataset
from .errors import (
    AcquisitionError,
    HpcIdError,
    MeasurementError,
    SchemaMismatchError,
    UnknownEventError,
    WorkloadError,
)
from .workloads import WorkloadHandle, WorkloadSpec

DEFAULT_WARMUP = 10  # executions per workload before the first retained sample


@dataclass
class AcquisitionPlan:
    """What to measure: targets, events, volumes, and seeds."""

    workloads: list
    events: list
    instances_per_class: int
    warmup_executions: int = DEFAULT_WARMUP
    seed: int = 0
    tag: str = ""
    randomize_order: bool = False  # sweep order shuffle, for noise studies

    def __post_init__(self):
        if not self.events:
            raise HpcIdError("acquisition plan needs at least one event")
        if self.instances_per_class < 1:
            raise HpcIdError("instances_per_class must be at least 1")
        if self.warmup_executions < 0:
            raise HpcIdError("warmup_executions must be non-negative")
        ids = [w.id for w in self.workloads]
        if sorted(ids) != list(range(len(ids))):
            raise HpcIdError(f"workload ids must be contiguous from 0, got {sorted(ids)}")

    @property
    def event_names(self):
        return [e.name if isinstance(e, EventDescriptor) else str(e) for e in self.events]

    @property
    def total_executions(self):
        """Measured executions plus warmup executions."""
        n_w = len(self.workloads)
        return (
            n_w * self.instances_per_class * len(self.events)
            + n_w * self.warmup_executions
        )


@dataclass
class MeasurementInstance:
    """One feature vector: event j's delta came from execution j."""

    label: int
    features: np.ndarray
    tag: str = ""
    instance_index: int = 0
    exec_indices: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if not np.all(np.isfinite(self.features)) or (self.features < 0).any():
            raise HpcIdError("features must be finite non-negative counts")


_WARMUP_STREAM = 0
_SWEEP_STREAM = 1


def _instance_seed(plan_seed, workload_id, instance_index, stream=_SWEEP_STREAM):
    # Stable positive int; instance inputs must not depend on sweep position.
    return int(
        np.random.SeedSequence(
            (plan_seed, workload_id, instance_index, stream)
        ).generate_state(1)[0]
    )


def warmup(backend, workload: WorkloadSpec, warmup_executions: int, event=None, plan_seed=0):
    """Execute the workload ``warmup_executions`` times, retaining nothing.

    Runs through the backend so backends that model warm-up transients see
    these executions too.
    """
    if warmup_executions < 0:
        raise HpcIdError("warmup_executions must be non-negative")
    if event is None:
        cat = backend.catalog()
        if not cat:
            raise HpcIdError("backend catalog is empty")
        event = cat[0]
    for i in range(warmup_executions):
        seed = _instance_seed(plan_seed, workload.id, i, stream=_WARMUP_STREAM)
        backend.measure_one(event, WorkloadHandle(workload, seed))


def _sweep(backend, events, workload, instance_seed, order, tag, instance_index):
    values = np.zeros(len(events), dtype=np.float64)
    exec_indices = [0] * len(events)
    for j in order:
        handle = WorkloadHandle(workload, instance_seed)
        sample = backend.measure_one(events[j], handle)
        values[j] = sample.value
        exec_indices[j] = sample.exec_index
    return MeasurementInstance(
        label=workload.id,
        features=values,
        tag=tag,
        instance_index=instance_index,
        exec_indices=exec_indices,
    )


def acquire(plan: AcquisitionPlan, backend, progress=False) -> Dataset:
    """Run the plan and return a balanced labeled dataset.

    A failing execution discards and re-acquires its whole instance once;
    a second failure aborts with a partial-progress report (no partial
    dataset is returned). With a replay backend the stored dataset is
    re-emitted unchanged.
    """
    if isinstance(backend, ReplayBackend):
        return backend.dataset()

    catalog_names = {e.name for e in backend.catalog()}
    event_objs = []
    for e in plan.events:
        name = e.name if isinstance(e, EventDescriptor) else str(e)
        if name not in catalog_names:
            raise UnknownEventError(f"plan event {name!r} not in backend catalog")
        event_objs.append(e if isinstance(e, EventDescriptor) else name)

    n_events = len(event_objs)
    total = len(plan.workloads) * plan.instances_per_class
    order_rng = np.random.default_rng(np.random.SeedSequence((plan.seed, 2)))
    rows = np.zeros((total, n_events), dtype=np.float64)
    labels = np.zeros(total, dtype=np.int64)
    tags = []
    done = 0
    executions = 0
    started = time.monotonic()

    for workload in sorted(plan.workloads, key=lambda w: w.id):
        try:
            warmup(backend, workload, plan.warmup_executions, plan_seed=plan.seed)
        except (MeasurementError, WorkloadError, HpcIdError) as exc:
            raise AcquisitionError(
                f"warmup failed for workload {workload.name!r}: {exc}",
                completed_instances=done,
                total_instances=total,
            ) from exc
        executions += plan.warmup_executions
        tag = workload.tag or plan.tag
        for i in range(plan.instances_per_class):
            seed = _instance_seed(plan.seed, workload.id, i)
            order = list(range(n_events))
            if plan.randomize_order:
                order = order_rng.permutation(n_events).tolist()
            instance = None
            failure = None
            for _attempt in range(2):
                try:
                    instance = _sweep(backend, event_objs, workload, seed, order, tag, i)
                    break
                except (MeasurementError, WorkloadError) as exc:
                    failure = exc
            if instance is None:
                raise AcquisitionError(
                    f"instance {i} of workload {workload.name!r} failed twice: {failure}",
                    completed_instances=done,
                    total_instances=total,
                ) from failure
            rows[done] = instance.features
            labels[done] = instance.label
            tags.append(instance.tag)
            done += 1
            executions += n_events
            if progress and done % 50 == 0:
                elapsed = max(time.monotonic() - started, 1e-9)
                print(
                    f"acquired {done}/{total} instances "
                    f"({executions / elapsed:.0f} executions/s)",
                    file=sys.stderr,
                )

    meta = {
        "backend": backend.name,
        "plan_seed": str(plan.seed),
        "plan_tag": plan.tag,
        "warmup_executions": str(plan.warmup_executions),
        "instances_per_class": str(plan.instances_per_class),
        "n_events": str(n_events),
        "class_table": ",".join(str(w.id) for w in sorted(plan.workloads, key=lambda w: w.id)),
        "class_names": ";".join(
            w.name for w in sorted(plan.workloads, key=lambda w: w.id)
        ),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    names = [e.name if isinstance(e, EventDescriptor) else str(e) for e in event_objs]
    return Dataset(names, rows, labels, tags, meta)


def mix(datasets, seed=0) -> Dataset:
    """Concatenate datasets with identical schemas and class tables, then
    shuffle rows by a seeded permutation. Per-row tags survive, so
    provenance is preserved."""
    if not datasets:
        raise HpcIdError("mix needs at least one dataset")
    first = datasets[0]
    for d in datasets[1:]:
        if d.schema != first.schema:
            for a, b in zip(first.schema, d.schema):
                if a != b:
                    raise SchemaMismatchError(
                        f"schema mismatch: {a!r} vs {b!r}"
                    )
            raise SchemaMismatchError(
                f"schema lengths differ: {len(first.schema)} vs {len(d.schema)}"
            )
        if d.class_table != first.class_table:
            raise SchemaMismatchError(
                f"class tables differ: {first.class_table} vs {d.class_table}"
            )
    rows = np.vstack([d.rows for d in datasets])
    labels = np.concatenate([d.labels for d in datasets])
    tags = [t for d in datasets for t in d.tags]
    perm = np.random.default_rng(seed).permutation(len(labels))
    meta = dict(first.meta)
    meta.update(
        {
            "mixed_from": str(len(datasets)),
            "mix_seed": str(seed),
            "plan_tag": "+".join(dict.fromkeys(d.meta.get("plan_tag", "") for d in datasets)),
        }
    )
    return Dataset(
        first.schema,
        rows[perm],
        labels[perm],
        [tags[i] for i in perm],
        meta,
    )
