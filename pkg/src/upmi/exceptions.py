"""Exception and warning classes raised across the pipeline."""


class UPMIError(Exception):
    """Base class for all pipeline errors."""


class TableError(UPMIError, ValueError):
    """A feature table failed validation."""


class SchemaMismatchError(TableError):
    pass


class MissingIdError(TableError):
    pass


class DuplicateIdError(TableError):
    pass


class LabelValueError(TableError):
    pass


class NonNumericError(TableError):
    pass


class NonFiniteError(TableError):
    pass


class LabelConflictError(TableError):
    pass


class EmptyIntersectionError(TableError):
    pass


class SingleClassError(UPMIError, ValueError):
    """Training data holds only one class."""


class EmptySelectionError(UPMIError, ValueError):
    """A feature-selection stage left no surviving features."""

    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f"no features survived the {stage!r} stage")


class StratificationError(UPMIError, ValueError):
    pass


class LeakageError(UPMIError):
    """The provenance audit found a subject both trained on and scored."""


class FoldError(UPMIError):
    """A cross-validation fold failed; carries the fold identity."""

    def __init__(self, message, outer_fold=None, inner_fold=None):
        self.outer_fold = outer_fold
        self.inner_fold = inner_fold
        super().__init__(message)


class DegenerateStatisticError(UPMIError, ValueError):
    """A test statistic is undefined (e.g. zero variance of differences)."""


class ConfigError(UPMIError, ValueError):
    """Invalid settings; ``details`` lists individual diagnostics when known."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = list(details or [])


class ConvergenceWarning(UserWarning):
    pass


class DegenerateStatisticWarning(UserWarning):
    pass


class ReportSchemaError(UPMIError):
    """An output artifact does not match its declared JSON schema."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = list(details or [])
