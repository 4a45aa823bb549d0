import numpy as np
import pytest

from hpcid import counters, harness, workloads
from hpcid.dataset import Dataset


EVENTS8 = [f"EV{i:02d}" for i in range(8)]
BASES8 = {e: 8000.0 + 700.0 * i for i, e in enumerate(EVENTS8)}


def make_backend(n_classes=4, events=None, bases=None, noise_cv=0.02, separation=0.2,
                 seed=5, **kwargs):
    events = events or EVENTS8
    bases = bases or {e: BASES8.get(e, 10000.0) for e in events}
    profiles = counters.build_synthetic_suite(
        events, bases, n_classes=n_classes, noise_cv=noise_cv,
        separation=separation, seed=seed, **kwargs
    )
    return counters.SyntheticBackend(profiles, events=events)


def acquire_synthetic(n_classes=4, instances=30, events=None, noise_cv=0.02,
                      separation=0.2, seed=5, plan_seed=9, warmup=3, **kwargs):
    backend = make_backend(n_classes=n_classes, events=events, noise_cv=noise_cv,
                           separation=separation, seed=seed, **kwargs)
    plan = harness.AcquisitionPlan(
        workloads=workloads.stub_suite(n_classes, seed=1),
        events=backend.catalog(),
        instances_per_class=instances,
        warmup_executions=warmup,
        seed=plan_seed,
    )
    return harness.acquire(plan, backend)


@pytest.fixture
def small_dataset():
    rng = np.random.default_rng(0)
    rows = rng.integers(10, 10000, size=(40, 3)).astype(float)
    labels = np.repeat(np.arange(4), 10)
    tags = ["O0"] * 20 + ["O3"] * 20
    return Dataset(["TOT_INS", "TOT_CYC", "BR_MSP"], rows, labels, tags,
                   {"backend": "synthetic", "plan_seed": "0"})
