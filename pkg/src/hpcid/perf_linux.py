"""Linux performance-monitoring backend over the perf_event_open syscall.

One counter is opened per measured execution (no grouping, no
multiplexing). The measuring thread is pinned to a single logical core
and kernel-attributed counts are excluded by default, with a toggle for
studies that want them included. The kernel's unprivileged-access policy
(kernel.perf_event_paranoid) is honored and quoted verbatim in errors.
"""

import ctypes
import os
import platform
import re
import struct

from .counters import PRIVILEGED, USER, CounterBackend, CounterSample, EventDescriptor
from .errors import BackendUnavailableError, MeasurementError

_SYSCALL_NR = {"x86_64": 298, "aarch64": 241, "riscv64": 241}

PERF_TYPE_HARDWARE = 0
PERF_TYPE_HW_CACHE = 3
PERF_TYPE_RAW = 4

# PERF_COUNT_HW_*
_HW = {
    "cycles": 0,
    "instructions": 1,
    "cache_references": 2,
    "cache_misses": 3,
    "branches": 4,
    "branch_misses": 5,
    "bus_cycles": 6,
    "stalled_front": 7,
    "stalled_back": 8,
    "ref_cycles": 9,
}


def _hw_cache(cache, op, result):
    return cache | (op << 8) | (result << 16)


# (type, config) per catalog event, keyed by PAPI-style preset names.
_EVENT_TABLE = [
    ("TOT_INS", "Instructions completed.", PERF_TYPE_HARDWARE, _HW["instructions"]),
    ("TOT_CYC", "Total cycles executed.", PERF_TYPE_HARDWARE, _HW["cycles"]),
    ("REF_CYC", "Reference cycles.", PERF_TYPE_HARDWARE, _HW["ref_cycles"]),
    ("BUS_CYC", "Bus cycles.", PERF_TYPE_HARDWARE, _HW["bus_cycles"]),
    ("BR_INS", "Branch instructions.", PERF_TYPE_HARDWARE, _HW["branches"]),
    ("BR_MSP", "Conditional branch mispredictions.", PERF_TYPE_HARDWARE, _HW["branch_misses"]),
    ("STL_ICY", "Cycles with no instruction issue.", PERF_TYPE_HARDWARE, _HW["stalled_front"]),
    ("RES_STL", "Cycles stalled on any resource.", PERF_TYPE_HARDWARE, _HW["stalled_back"]),
    ("CA_ACC", "Cache references.", PERF_TYPE_HARDWARE, _HW["cache_references"]),
    ("CA_MIS", "Cache misses.", PERF_TYPE_HARDWARE, _HW["cache_misses"]),
    ("L1_DCA", "L1 data cache accesses.", PERF_TYPE_HW_CACHE, _hw_cache(0, 0, 0)),
    ("L1_DCM", "L1 data cache misses.", PERF_TYPE_HW_CACHE, _hw_cache(0, 0, 1)),
    ("L1_ICA", "L1 instruction cache accesses.", PERF_TYPE_HW_CACHE, _hw_cache(1, 0, 0)),
    ("L1_ICM", "L1 instruction cache misses.", PERF_TYPE_HW_CACHE, _hw_cache(1, 0, 1)),
    ("LLC_TCA", "Last-level cache accesses.", PERF_TYPE_HW_CACHE, _hw_cache(2, 0, 0)),
    ("LLC_TCM", "Last-level cache misses.", PERF_TYPE_HW_CACHE, _hw_cache(2, 0, 1)),
    ("TLB_DM", "Data TLB misses.", PERF_TYPE_HW_CACHE, _hw_cache(3, 0, 1)),
    ("TLB_IM", "Instruction TLB misses.", PERF_TYPE_HW_CACHE, _hw_cache(4, 0, 1)),
]

_FLAG_DISABLED = 1 << 0
_FLAG_EXCLUDE_KERNEL = 1 << 5
_FLAG_EXCLUDE_HV = 1 << 6

_IOC_ENABLE = 0x2400
_IOC_DISABLE = 0x2401
_IOC_RESET = 0x2403


class _PerfEventAttr(ctypes.Structure):
    _fields_ = [
        ("type", ctypes.c_uint),
        ("size", ctypes.c_uint),
        ("config", ctypes.c_ulonglong),
        ("sample_period", ctypes.c_ulonglong),
        ("sample_type", ctypes.c_ulonglong),
        ("read_format", ctypes.c_ulonglong),
        ("flags", ctypes.c_ulonglong),
        ("wakeup_events", ctypes.c_uint),
        ("bp_type", ctypes.c_uint),
        ("config1", ctypes.c_ulonglong),
        ("config2", ctypes.c_ulonglong),
    ]


def read_paranoid():
    """Current kernel.perf_event_paranoid value, or None if unreadable."""
    try:
        with open("/proc/sys/kernel/perf_event_paranoid") as fh:
            return int(fh.read().strip())
    except (OSError, ValueError):
        return None


def _interrupt_event():
    """(name, type, config) for the hardware-interrupt counter, only when
    the host advertises it through sysfs."""
    path = "/sys/bus/event_source/devices/cpu/events/hw_interrupts"
    try:
        with open(path) as fh:
            text = fh.read().strip()
    except OSError:
        return None
    m = re.match(r"event=(0x[0-9a-fA-F]+|\d+)", text)
    if not m:
        return None
    config = int(m.group(1), 0)
    um = re.search(r"umask=(0x[0-9a-fA-F]+|\d+)", text)
    if um:
        config |= int(um.group(1), 0) << 8
    return ("HW_INT", PERF_TYPE_RAW, config)


class PerfEventBackend(CounterBackend):
    """Measures one event per execution via perf_event_open.

    The catalog is probed once at construction: only events the host can
    actually open are listed, in table order. Event privilege tags follow
    the paranoid policy in force when the backend was opened.
    """

    name = "os"

    def __init__(self, cpu=0, exclude_kernel=True, mode=USER):
        if platform.system() != "Linux":
            raise BackendUnavailableError(
                "OS backend requires Linux perf_event_open; "
                f"running on {platform.system()}"
            )
        nr = _SYSCALL_NR.get(platform.machine())
        if nr is None:
            raise BackendUnavailableError(
                f"no perf_event_open syscall number for {platform.machine()}"
            )
        self._nr = nr
        self._libc = ctypes.CDLL(None, use_errno=True)
        self._cpu = cpu
        self._exclude_kernel = exclude_kernel
        self._mode = mode
        self._paranoid = read_paranoid()
        self._old_affinity = None
        try:
            self._old_affinity = os.sched_getaffinity(0)
            os.sched_setaffinity(0, {cpu})
        except (AttributeError, OSError):
            self._old_affinity = None
        self._exec_index = 0
        self._catalog = self._probe_catalog()
        if not self._catalog:
            raise BackendUnavailableError(self._unavailable_reason())

    def _unavailable_reason(self):
        if self._paranoid is not None and self._paranoid > 2:
            return (
                "perf_event_open denies unprivileged access: "
                f"kernel.perf_event_paranoid = {self._paranoid}; lower the "
                "setting or run privileged"
            )
        return "perf_event_open opened no hardware events on this host"

    # syscall plumbing -----------------------------------------------------

    def _open_fd(self, type_, config):
        attr = _PerfEventAttr()
        attr.type = type_
        attr.size = ctypes.sizeof(_PerfEventAttr)
        attr.config = config
        attr.flags = _FLAG_DISABLED | _FLAG_EXCLUDE_HV
        if self._exclude_kernel:
            attr.flags |= _FLAG_EXCLUDE_KERNEL
        fd = self._libc.syscall(
            ctypes.c_long(self._nr),
            ctypes.byref(attr),
            ctypes.c_int(0),  # this process
            ctypes.c_int(-1),  # any cpu (thread is pinned)
            ctypes.c_int(-1),
            ctypes.c_ulong(0),
        )
        if fd < 0:
            err = ctypes.get_errno()
            raise OSError(err, os.strerror(err))
        return fd

    def _ioctl(self, fd, req):
        if self._libc.ioctl(fd, req, 0) != 0:
            err = ctypes.get_errno()
            raise OSError(err, os.strerror(err))

    def _probe_catalog(self):
        table = list(_EVENT_TABLE)
        interrupt = _interrupt_event()
        if interrupt is not None:
            name, type_, config = interrupt
            table.append((name, "Hardware interrupts received.", type_, config))
        catalog = []
        denied = False
        for name, desc, type_, config in table:
            try:
                fd = self._open_fd(type_, config)
            except OSError as exc:
                if exc.errno in (1, 13):  # EPERM, EACCES
                    denied = True
                continue
            os.close(fd)
            privilege = USER
            if self._paranoid is not None and self._paranoid > 2:
                privilege = PRIVILEGED
            catalog.append(
                EventDescriptor(
                    name=name,
                    description=desc,
                    privilege=privilege,
                    backend_code=(type_, config),
                )
            )
        if not catalog and denied:
            raise BackendUnavailableError(self._unavailable_reason())
        return catalog

    # contract -------------------------------------------------------------

    def catalog(self):
        return list(self._catalog)

    def measure_one(self, event, handle):
        ev = self._lookup(event.name if isinstance(event, EventDescriptor) else event)
        self._check_privilege(ev, self._mode)
        type_, config = ev.backend_code
        try:
            fd = self._open_fd(type_, config)
        except OSError as exc:
            raise MeasurementError(f"cannot open counter {ev.name}: {exc}") from exc
        try:
            try:
                self._ioctl(fd, _IOC_RESET)
                self._ioctl(fd, _IOC_ENABLE)
                pre = struct.unpack("Q", os.read(fd, 8))[0]
            except OSError as exc:
                raise MeasurementError(f"cannot read counter {ev.name}: {exc}") from exc
            try:
                handle.run()
            except Exception as exc:
                raise MeasurementError(
                    f"measurement of {ev.name} failed: workload raised {exc}"
                ) from exc
            try:
                post = struct.unpack("Q", os.read(fd, 8))[0]
                self._ioctl(fd, _IOC_DISABLE)
            except OSError as exc:
                raise MeasurementError(f"cannot read counter {ev.name}: {exc}") from exc
        finally:
            os.close(fd)
        if post < pre:
            raise MeasurementError(
                f"counter {ev.name} wrapped: post {post} < pre {pre}"
            )
        idx = self._exec_index
        self._exec_index += 1
        return CounterSample(event=ev.name, value=post - pre, exec_index=idx)

    def close(self):
        if self._old_affinity:
            try:
                os.sched_setaffinity(0, self._old_affinity)
            except OSError:
                pass
            self._old_affinity = None


def available():
    """True when the OS backend can open at least one hardware event."""
    try:
        backend = PerfEventBackend()
    except BackendUnavailableError:
        return False
    backend.close()
    return True
