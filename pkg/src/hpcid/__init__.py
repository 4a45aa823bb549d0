"""hpcid: fingerprint black-box functions from hardware performance
counter side effects.

The toolkit measures multi-counter deltas around function invocations,
builds labeled datasets, trains and evaluates classifiers, and explains
which counters matter.
"""

__version__ = "0.1.0"

from .counters import (
    CounterSample,
    EventDescriptor,
    ReplayBackend,
    SyntheticBackend,
    SyntheticProfile,
    build_synthetic_suite,
    synth_generate,
)
from .dataset import (
    Dataset,
    Normalizer,
    apply_normalizer,
    fit_normalizer,
    load,
    relabel_binary,
    save,
    split,
)
from .harness import AcquisitionPlan, MeasurementInstance, acquire, mix, warmup
from .workloads import WorkloadSpec, builtin_suite, invoke, stub_suite

__all__ = [
    "AcquisitionPlan",
    "CounterSample",
    "Dataset",
    "EventDescriptor",
    "MeasurementInstance",
    "Normalizer",
    "ReplayBackend",
    "SyntheticBackend",
    "SyntheticProfile",
    "WorkloadSpec",
    "acquire",
    "apply_normalizer",
    "build_synthetic_suite",
    "builtin_suite",
    "fit_normalizer",
    "invoke",
    "load",
    "mix",
    "relabel_binary",
    "save",
    "split",
    "stub_suite",
    "synth_generate",
    "warmup",
]
