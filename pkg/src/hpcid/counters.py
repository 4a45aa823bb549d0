"""Counter backends: the measurement contract plus synthetic and replay
implementations.

A backend owns a catalog of named events and measures exactly one event
around one execution of a workload handle (one armed counter per
execution). The synthetic backend produces seeded, class-conditioned
counts for desk-scale experiments; the replay backend re-serves values
recorded elsewhere, bit-exactly and in stored order.
"""

import configparser
import functools
import hashlib
import math
from dataclasses import dataclass

from .errors import (
    ConfigError,
    MeasurementError,
    PrivilegeError,
    UnknownEventError,
)

USER = "user"
PRIVILEGED = "privileged"


@dataclass(frozen=True)
class EventDescriptor:
    """One named counter event and the access level it requires."""

    name: str
    description: str = ""
    privilege: str = USER
    backend_code: object = None

    def __post_init__(self):
        if self.privilege not in (USER, PRIVILEGED):
            raise ConfigError(f"bad privilege {self.privilege!r} for event {self.name!r}")


@dataclass(frozen=True)
class CounterSample:
    """A count delta around exactly one execution."""

    event: str
    value: int
    exec_index: int

    def __post_init__(self):
        if self.value < 0:
            raise MeasurementError(f"negative delta for {self.event}: {self.value}")


class CounterBackend:
    """Contract shared by all backends. Instances are single-threaded."""

    name = "abstract"

    def catalog(self):
        """Every measurable event, in stable order."""
        raise NotImplementedError

    def measure_one(self, event: EventDescriptor, handle) -> CounterSample:
        """Arm one counter, run ``handle`` exactly once, return the delta."""
        raise NotImplementedError

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # shared helpers -------------------------------------------------------

    def _lookup(self, name):
        for ev in self.catalog():
            if ev.name == name:
                return ev
        raise UnknownEventError(f"event {name!r} not in {self.name} catalog")

    def _check_privilege(self, event, mode):
        if event.privilege == PRIVILEGED and mode != PRIVILEGED:
            raise PrivilegeError(
                f"event {event.name!r} requires privileged access but the "
                f"{self.name} backend was opened in user mode"
            )


# ---------------------------------------------------------------------------
# Synthetic backend


def _stable_key(*parts):
    """64-bit seed from heterogeneous parts, stable across processes."""
    h = hashlib.blake2s(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


_M64 = (1 << 64) - 1


def _splitmix64(state):
    """(output, next_state); cheap keyed stream for per-draw uniforms."""
    state = (state + 0x9E3779B97F4A7C15) & _M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64, state


def _uniforms(key, n):
    """n floats in (0, 1], deterministic in key."""
    out = []
    state = key
    for _ in range(n):
        z, state = _splitmix64(state)
        out.append((z + 1) / 18446744073709551616.0)
    return out


@dataclass(frozen=True)
class SyntheticProfile:
    """Per-class generator parameters for one synthetic target.

    Counts are drawn as ``round(mean * m)`` where ``m`` is unit-mean
    lognormal noise with coefficient of variation ``noise_cv``, plus an
    additive spike with probability ``overcount_rate``. ``separation``
    scales deterministic per-class spacing applied on top of
    ``per_event_base``. The optional warm ramp inflates early executions
    to mimic cache warming.
    """

    class_id: int
    per_event_base: dict
    noise_cv: float = 0.0
    separation: float = 0.0
    overcount_rate: float = 0.0
    seed: int = 0
    informative: frozenset = None  # events that carry class signal; None = all
    warm_ramp: float = 0.0  # relative inflation of execution 0
    warm_decay: float = 0.5  # geometric decay of the ramp per execution

    def __post_init__(self):
        for ev, base in self.per_event_base.items():
            if base <= 0:
                raise ConfigError(f"base for event {ev!r} must be positive, got {base}")
        if not (0.0 <= self.overcount_rate <= 1.0):
            raise ConfigError(f"overcount_rate must be in [0,1], got {self.overcount_rate}")
        if self.noise_cv < 0:
            raise ConfigError(f"noise_cv must be non-negative, got {self.noise_cv}")

    def mean(self, event):
        """Steady-state expected count for ``event`` under this profile."""
        if event not in self.per_event_base:
            raise UnknownEventError(f"event {event!r} not in profile {self.class_id}")
        base = self.per_event_base[event]
        if self.informative is not None and event not in self.informative:
            return float(base)
        # Deterministic per-event direction/scale in [0.5, 1.0]; classes are
        # spaced proportionally to class_id so distinct ids never collide.
        u = 0.5 + 0.5 * _unit(self.seed, "spacing", event)
        return float(base) * (1.0 + self.separation * self.class_id * u)


@functools.lru_cache(maxsize=65536)
def _unit(seed, label, event):
    return _uniforms(_stable_key(seed, label, event), 1)[0]


def synth_generate(profile: SyntheticProfile, event: str, exec_index: int) -> int:
    """Pure function of (profile seed, class, event, exec_index)."""
    mean = profile.mean(event)
    key = _stable_key(profile.seed, profile.class_id, event, exec_index)
    u1, u2, u3, u4 = _uniforms(key, 4)
    if profile.noise_cv > 0:
        # Lognormal with unit mean and std equal to noise_cv; Box-Muller
        # normal from the keyed uniform stream.
        sigma = math.sqrt(math.log1p(profile.noise_cv**2))
        normal = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        m = math.exp(-0.5 * sigma * sigma + sigma * normal)
    else:
        m = 1.0
    value = mean * m
    if profile.warm_ramp > 0:
        value *= 1.0 + profile.warm_ramp * profile.warm_decay**exec_index
    value = int(round(value))
    if profile.overcount_rate > 0 and u3 < profile.overcount_rate:
        # Additive spike mimicking overcount errata: a few percent of the mean.
        value += int(round(mean * (0.01 + 0.04 * u4)))
    return max(value, 0)


class SyntheticBackend(CounterBackend):
    """Deterministic backend over a set of per-class profiles.

    Execution indices advance per class, so a fresh instance with the same
    profiles replays identical values.
    """

    name = "synthetic"

    def __init__(self, profiles, events=None, mode=USER, privileged_events=()):
        by_class = {}
        for p in profiles:
            if p.class_id in by_class:
                raise ConfigError(f"duplicate synthetic profile for class {p.class_id}")
            by_class[p.class_id] = p
        if not by_class:
            raise ConfigError("synthetic backend needs at least one profile")
        self._profiles = by_class
        first = next(iter(by_class.values()))
        names = list(events) if events is not None else list(first.per_event_base)
        for p in by_class.values():
            missing = [e for e in names if e not in p.per_event_base]
            if missing:
                raise ConfigError(
                    f"profile {p.class_id} lacks events {missing}"
                )
        privileged = set(privileged_events)
        self._catalog = [
            EventDescriptor(
                name=n,
                description=f"synthetic event {n}",
                privilege=PRIVILEGED if n in privileged else USER,
                backend_code=i,
            )
            for i, n in enumerate(names)
        ]
        self._mode = mode
        self._exec_index = {c: 0 for c in by_class}

    def catalog(self):
        return list(self._catalog)

    def profile(self, class_id):
        try:
            return self._profiles[class_id]
        except KeyError:
            raise UnknownEventError(f"no synthetic profile for class {class_id}") from None

    def measure_one(self, event, handle):
        ev = self._lookup(event.name if isinstance(event, EventDescriptor) else event)
        self._check_privilege(ev, self._mode)
        profile = self.profile(handle.class_id)
        idx = self._exec_index[handle.class_id]
        self._exec_index[handle.class_id] = idx + 1
        handle.run()
        value = synth_generate(profile, ev.name, idx)
        return CounterSample(event=ev.name, value=value, exec_index=idx)


def build_synthetic_suite(
    events,
    bases,
    n_classes,
    noise_cv=0.02,
    separation=0.05,
    overcount_rate=0.0,
    seed=0,
    informative=None,
    warm_ramp=0.0,
    warm_decay=0.5,
):
    """Profiles for ``n_classes`` classes sharing one base map."""
    if set(events) != set(bases):
        raise ConfigError("synthetic events and bases must name the same set")
    info = None if informative is None else frozenset(informative)
    return [
        SyntheticProfile(
            class_id=c,
            per_event_base=dict(bases),
            noise_cv=noise_cv,
            separation=separation,
            overcount_rate=overcount_rate,
            seed=seed,
            informative=info,
            warm_ramp=warm_ramp,
            warm_decay=warm_decay,
        )
        for c in range(n_classes)
    ]


def load_synthetic_config(path, mode=USER):
    """Build a SyntheticBackend from an INI file.

    ``[synthetic]`` keys: events (comma list), base.<EVENT> = value,
    classes, noise_cv, separation, overcount_rate, seed, informative
    (comma list, optional), privileged (comma list, optional),
    warm_ramp, warm_decay.
    """
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read synthetic config {path!r}")
    if "synthetic" not in parser:
        raise ConfigError(f"{path!r} has no [synthetic] section")
    sec = parser["synthetic"]
    events = [e.strip() for e in sec.get("events", "").split(",") if e.strip()]
    if not events:
        raise ConfigError("synthetic config must list events")
    bases = {}
    for ev in events:
        key = f"base.{ev}"
        if key not in sec:
            raise ConfigError(f"synthetic config missing {key}")
        bases[ev] = sec.getfloat(key)
    informative = None
    if sec.get("informative", "").strip():
        informative = [e.strip() for e in sec["informative"].split(",") if e.strip()]
    privileged = [e.strip() for e in sec.get("privileged", "").split(",") if e.strip()]
    profiles = build_synthetic_suite(
        events,
        bases,
        n_classes=sec.getint("classes", 2),
        noise_cv=sec.getfloat("noise_cv", 0.02),
        separation=sec.getfloat("separation", 0.05),
        overcount_rate=sec.getfloat("overcount_rate", 0.0),
        seed=sec.getint("seed", 0),
        informative=informative,
        warm_ramp=sec.getfloat("warm_ramp", 0.0),
        warm_decay=sec.getfloat("warm_decay", 0.5),
    )
    return SyntheticBackend(profiles, events=events, mode=mode, privileged_events=privileged)


# ---------------------------------------------------------------------------
# Replay backend


class ReplayBackend(CounterBackend):
    """Serves a previously recorded dataset, bit-exactly and in order.

    ``measure_one`` walks the stored matrix row-major: each call must ask
    for the column the cursor sits on, mirroring the sweep that produced
    the file. :meth:`dataset` exposes the stored rows directly for
    pipeline stages that replay whole files.
    """

    name = "replay"

    def __init__(self, dataset):
        self._dataset = dataset
        self._catalog = [
            EventDescriptor(name=n, description="replayed event", privilege=USER, backend_code=i)
            for i, n in enumerate(dataset.schema)
        ]
        self._row = 0
        self._col = 0

    def catalog(self):
        return list(self._catalog)

    def dataset(self):
        return self._dataset

    def measure_one(self, event, handle):
        name = event.name if isinstance(event, EventDescriptor) else event
        self._lookup(name)
        rows = self._dataset.rows
        if self._row >= rows.shape[0]:
            raise MeasurementError("replay exhausted: no more stored executions")
        expected = self._dataset.schema[self._col]
        if name != expected:
            raise MeasurementError(
                f"replay cursor is at column {expected!r}, not {name!r}; "
                "drive the sweep in stored schema order"
            )
        value = int(rows[self._row, self._col])
        exec_index = self._row * len(self._dataset.schema) + self._col
        self._col += 1
        if self._col == len(self._dataset.schema):
            self._col = 0
            self._row += 1
        if handle is not None and hasattr(handle, "run"):
            handle.run()
        return CounterSample(event=name, value=value, exec_index=exec_index)
