"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 2, environment and
backend problems exit 3, data errors exit 4.
"""


class HpcIdError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(HpcIdError):
    """A configuration file or parameter set is invalid."""


class BackendUnavailableError(HpcIdError):
    """A counter backend cannot operate in the current environment.

    The message names the failing capability, e.g. the kernel's
    perf_event_paranoid setting or a missing syscall.
    """


class UnknownEventError(HpcIdError):
    """An event name is not in the backend catalog or profile."""


class PrivilegeError(HpcIdError):
    """A privileged event was requested through a user-mode backend."""


class MeasurementError(HpcIdError):
    """A single counter measurement failed (open, read, or wraparound)."""


class WorkloadError(HpcIdError):
    """A measurement target could not be prepared or executed."""


class SymbolNotFoundError(WorkloadError):
    """A dynamic library or symbol failed to resolve."""


class InvocationFailedError(WorkloadError):
    """The target function crashed or raised during invocation."""


class AcquisitionError(HpcIdError):
    """Acquisition aborted; carries a partial-progress report."""

    def __init__(self, message, completed_instances=0, total_instances=0):
        super().__init__(message)
        self.completed_instances = completed_instances
        self.total_instances = total_instances


class SchemaMismatchError(HpcIdError):
    """Two datasets or a model and a dataset disagree on the event schema."""


class DatasetFormatError(HpcIdError):
    """A dataset file is malformed; carries line/column diagnostics."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column
