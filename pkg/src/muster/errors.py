"""Exception taxonomy shared across the package.

The CLI maps these onto stable exit codes: schema/validation problems are
exit 3, dispatch problems exit 4, and I/O problems exit 5.
"""


class MusterError(Exception):
    """Base class for every error raised by this package."""


# --- descriptor / invocation definition errors -------------------------------

class DescriptorSyntaxError(MusterError):
    """A descriptor, invocation, or sweep file is not valid JSON."""


class SchemaError(MusterError):
    """A definition violates the descriptor schema; names the offending field."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class UnsupportedFeature(SchemaError):
    """The descriptor uses a recognized feature this subset does not implement."""


class ValidationError(MusterError):
    """An invocation fails validation against its descriptor."""

    def __init__(self, input_id: str, message: str, index: int | None = None):
        super().__init__(message)
        self.input_id = input_id
        # position within an invocation list, set when expansion annotates it
        self.index = index


class MissingRequired(ValidationError):
    """A required input without a default has no value."""


class TypeMismatch(ValidationError):
    """A value does not match its input's declared kind."""


class ChoiceViolation(ValidationError):
    """A value is not a member of the input's value-choices."""


class UnknownInput(ValidationError):
    """The invocation names an input the descriptor does not define."""


class UnresolvedKey(MusterError):
    """A value-key survived rendering; indicates an internal bug, not user error."""


# --- task expansion -----------------------------------------------------------

class NotABidsDir(MusterError):
    """The given dataset directory contains no sub-* entries."""


class UnknownParticipant(MusterError):
    """An explicitly requested participant label is not present in the dataset."""


# --- sentinel -----------------------------------------------------------------

class OutputDirError(MusterError):
    """The provenance directory is missing or unwritable."""


class SpawnError(MusterError):
    """The task command could not be launched at all."""


class ProcessGone(MusterError):
    """The supervised root process was reaped before the first sample."""


class AlreadyFinalized(MusterError):
    """finalize_record was called on a record that already has a finish time."""


# --- runner -------------------------------------------------------------------

class TemplateError(MusterError):
    """A submission template has an unknown or missing placeholder."""


class SubmitError(MusterError):
    """The scheduler submit command failed for one task."""

    def __init__(self, task_id: str, message: str):
        super().__init__(message)
        self.task_id = task_id


class StageError(MusterError):
    """Copying a task bundle into the staging directory failed."""

    def __init__(self, message: str, task_id: str | None = None):
        super().__init__(message)
        self.task_id = task_id


class LockError(MusterError):
    """Another dispatcher holds the experiment lockfile."""


# --- provenance / portal ------------------------------------------------------

class NotAnExperimentDir(MusterError):
    """The directory has no experiment manifest."""


class UnknownField(MusterError):
    """A filter or sort names a field that is not a task-row column."""


class BadOperator(MusterError):
    """A filter uses an operator outside {eq, ne, lt, gt, contains}."""


class PortInUse(MusterError):
    """The requested portal port is already bound."""
