import numpy as np
import pytest

from hpcid import counters, workloads
from hpcid.counters import SyntheticBackend
from hpcid.errors import (
    AcquisitionError,
    HpcIdError,
    MeasurementError,
    SchemaMismatchError,
)
from hpcid.harness import DEFAULT_WARMUP, AcquisitionPlan, acquire, mix, warmup

from conftest import acquire_synthetic, make_backend


def test_plan_arithmetic():
    backend = make_backend(n_classes=4, events=[f"E{i}" for i in range(7)],
                           bases={f"E{i}": 100.0 for i in range(7)})
    plan = AcquisitionPlan(workloads=workloads.stub_suite(4), events=backend.catalog(),
                           instances_per_class=50, warmup_executions=10, seed=1)
    assert plan.total_executions == 4 * 50 * 7 + 4 * 10
    data = acquire(plan, backend)
    assert data.rows.shape == (200, 7)
    assert np.bincount(data.labels).tolist() == [50, 50, 50, 50]


def test_reference_scale_plan_arithmetic_documented_not_run():
    # the full-scale configuration stays a paper exercise: ~31.3M executions
    plan = AcquisitionPlan(
        workloads=workloads.stub_suite(64),
        events=[f"E{i}" for i in range(49)],
        instances_per_class=10_000,
        warmup_executions=10,
    )
    assert plan.total_executions == 64 * 10_000 * 49 + 64 * 10
    assert plan.total_executions == pytest.approx(31.3e6, rel=0.01)


def test_default_warmup_is_ten():
    assert DEFAULT_WARMUP == 10
    plan = AcquisitionPlan(workloads=workloads.stub_suite(2), events=["A"],
                           instances_per_class=1)
    assert plan.warmup_executions == 10


def test_warmup_zero_runs_nothing():
    class CountingBackend(SyntheticBackend):
        def __init__(self, *a, **kw):
            super().__init__(*a, **kw)
            self.calls = 0

        def measure_one(self, event, handle):
            self.calls += 1
            return super().measure_one(event, handle)

    profiles = counters.build_synthetic_suite(["A"], {"A": 10.0}, n_classes=1)
    backend = CountingBackend(profiles, events=["A"])
    warmup(backend, workloads.stub_suite(1)[0], 0)
    assert backend.calls == 0
    warmup(backend, workloads.stub_suite(1)[0], 4)
    assert backend.calls == 4


def test_warm_ramp_decays_within_warmup():
    # ramp configured to decay within 10 executions; after the default
    # warmup the first retained sample sits within 3% of steady state
    profiles = counters.build_synthetic_suite(
        ["A"], {"A": 10000.0}, n_classes=1, noise_cv=0.0, separation=0.0,
        warm_ramp=0.5, warm_decay=0.5,
    )
    backend = SyntheticBackend(profiles, events=["A"])
    spec = workloads.stub_suite(1)[0]
    first_cold = backend.measure_one("A", workloads.WorkloadHandle(spec, 0)).value
    assert first_cold > 10000 * 1.03  # visibly warm at the start
    warmup(backend, spec, DEFAULT_WARMUP - 1)
    first_retained = backend.measure_one("A", workloads.WorkloadHandle(spec, 1)).value
    assert abs(first_retained - 10000) / 10000 < 0.03


def test_zero_noise_instances_identical_per_class():
    data = acquire_synthetic(n_classes=3, instances=5, noise_cv=0.0)
    for c in range(3):
        rows = data.rows[data.labels == c]
        assert np.all(rows == rows[0])


def test_acquire_is_reproducible_bit_exactly():
    a = acquire_synthetic(n_classes=3, instances=10)
    b = acquire_synthetic(n_classes=3, instances=10)
    assert a.rows.shape == b.rows.shape
    assert np.array_equal(a.rows, b.rows)
    assert np.array_equal(a.labels, b.labels)
    assert a.tags == b.tags


def test_sweep_integrity_no_shared_executions():
    # trace executions through the synthetic counter: every feature of an
    # instance must come from a distinct execution index
    class TracingBackend(SyntheticBackend):
        def __init__(self, *a, **kw):
            super().__init__(*a, **kw)
            self.trace = []

        def measure_one(self, event, handle):
            sample = super().measure_one(event, handle)
            self.trace.append((handle.class_id, sample.exec_index))
            return sample

    profiles = counters.build_synthetic_suite(
        [f"E{i}" for i in range(5)], {f"E{i}": 100.0 for i in range(5)}, n_classes=2
    )
    backend = TracingBackend(profiles, events=[f"E{i}" for i in range(5)])
    plan = AcquisitionPlan(workloads=workloads.stub_suite(2), events=backend.catalog(),
                           instances_per_class=4, warmup_executions=2, seed=3)
    acquire(plan, backend)
    for class_id in (0, 1):
        indices = [i for c, i in backend.trace if c == class_id]
        assert len(indices) == len(set(indices))
        # sweeps of one instance are consecutive executions
        measured = indices[2:]  # skip warmup
        for inst in range(4):
            sweep = measured[inst * 5:(inst + 1) * 5]
            assert sweep == list(range(sweep[0], sweep[0] + 5))


def test_randomized_sweep_order_keeps_schema_positions():
    # the toggle shuffles execution order, not feature positions: with a
    # zero-noise backend the rows come out identical either way
    backend_a = make_backend(n_classes=2, noise_cv=0.0)
    backend_b = make_backend(n_classes=2, noise_cv=0.0)
    base = dict(workloads=workloads.stub_suite(2), instances_per_class=6,
                warmup_executions=0, seed=4)
    plain = acquire(AcquisitionPlan(events=backend_a.catalog(), **base), backend_a)
    shuffled = acquire(
        AcquisitionPlan(events=backend_b.catalog(), randomize_order=True, **base),
        backend_b,
    )
    assert plain.schema == shuffled.schema
    assert np.array_equal(plain.rows, shuffled.rows)


def test_acquire_rejects_unknown_plan_event():
    backend = make_backend(n_classes=2)
    plan = AcquisitionPlan(workloads=workloads.stub_suite(2), events=["MISSING"],
                           instances_per_class=2)
    with pytest.raises(Exception):
        acquire(plan, backend)


def test_single_failure_retries_second_aborts():
    class FlakyBackend(SyntheticBackend):
        def __init__(self, *a, fail_times=1, **kw):
            super().__init__(*a, **kw)
            self.fail_times = fail_times
            self.measured = 0

        def measure_one(self, event, handle):
            self.measured += 1
            if self.fail_times > 0 and self.measured == 8:
                self.fail_times -= 1
                raise MeasurementError("transient glitch")
            return super().measure_one(event, handle)

    profiles = counters.build_synthetic_suite(["A", "B"], {"A": 10.0, "B": 20.0},
                                              n_classes=1)
    backend = FlakyBackend(profiles, events=["A", "B"], fail_times=1)
    plan = AcquisitionPlan(workloads=workloads.stub_suite(1), events=backend.catalog(),
                           instances_per_class=5, warmup_executions=0, seed=1)
    data = acquire(plan, backend)  # one retry absorbs the glitch
    assert len(data) == 5

    class AlwaysFailing(FlakyBackend):
        def measure_one(self, event, handle):
            self.measured += 1
            if self.measured >= 8:
                raise MeasurementError("persistent failure")
            return SyntheticBackend.measure_one(self, event, handle)

    backend3 = AlwaysFailing(profiles, events=["A", "B"])
    with pytest.raises(AcquisitionError) as err:
        acquire(plan, backend3)
    assert err.value.completed_instances < err.value.total_instances


def test_plan_validation():
    with pytest.raises(HpcIdError):
        AcquisitionPlan(workloads=workloads.stub_suite(2), events=[],
                        instances_per_class=1)
    with pytest.raises(HpcIdError):
        AcquisitionPlan(workloads=workloads.stub_suite(2), events=["A"],
                        instances_per_class=0)
    bad = [workloads.WorkloadSpec(id=3, name="x"), workloads.WorkloadSpec(id=5, name="y")]
    with pytest.raises(HpcIdError):
        AcquisitionPlan(workloads=bad, events=["A"], instances_per_class=1)


def test_replay_backend_reemits_dataset():
    data = acquire_synthetic(n_classes=2, instances=4)
    replay = counters.ReplayBackend(data)
    plan = AcquisitionPlan(workloads=workloads.stub_suite(2),
                           events=[e.name for e in replay.catalog()],
                           instances_per_class=4)
    again = acquire(plan, replay)
    assert again == data


# mix -------------------------------------------------------------------------


def _tagged(data, tag):
    return type(data)(data.schema, data.rows, data.labels, [tag] * len(data), data.meta)


def test_mix_concatenates_and_shuffles():
    base = acquire_synthetic(n_classes=4, instances=50)
    parts = [_tagged(base, t) for t in ("O0", "Os", "O3")]
    mixed = mix(parts, seed=5)
    assert len(mixed) == 600
    # multiset of rows preserved
    def rowset(rows):
        return sorted(map(tuple, rows.tolist()))
    assert rowset(mixed.rows) == rowset(np.vstack([p.rows for p in parts]))
    assert sorted(mixed.tags) == sorted(["O0"] * 200 + ["Os"] * 200 + ["O3"] * 200)
    # provenance survives per-row
    for row, tag in zip(mixed.rows, mixed.tags):
        assert tag in ("O0", "Os", "O3")


def test_mix_singleton_permutes():
    base = acquire_synthetic(n_classes=2, instances=20)
    mixed = mix([base], seed=1)
    assert len(mixed) == len(base)
    assert not np.array_equal(mixed.rows, base.rows)  # whp under this seed
    assert sorted(map(tuple, mixed.rows.tolist())) == sorted(map(tuple, base.rows.tolist()))


def test_mix_deterministic_under_seed():
    base = acquire_synthetic(n_classes=2, instances=10)
    m1 = mix([base, base], seed=9)
    m2 = mix([base, base], seed=9)
    assert np.array_equal(m1.rows, m2.rows)
    assert m1.tags == m2.tags


def test_mix_schema_mismatch_names_first_difference():
    a = acquire_synthetic(n_classes=2, instances=4)
    schema_b = list(a.schema)
    schema_b[2] = "WEIRD"
    b = type(a)(schema_b, a.rows, a.labels, a.tags, a.meta)
    with pytest.raises(SchemaMismatchError) as err:
        mix([a, b], seed=0)
    assert a.schema[2] in str(err.value) and "WEIRD" in str(err.value)
