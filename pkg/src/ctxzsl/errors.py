"""Exception hierarchy. The CLI maps these onto process exit codes."""


class ZslError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 2


class DataError(ZslError, ValueError):
    """Bad input data: missing files, malformed records, contract violations."""

    exit_code = 2


class ParseError(DataError):
    """An artifact file could not be decoded."""

    def __init__(self, path, offset, reason):
        self.path = str(path)
        self.offset = offset
        self.reason = reason
        super().__init__(f"{self.path}: parse error at byte offset {offset}: {reason}")


class FormatVersionError(DataError):
    """Artifact written by an incompatible (usually newer) format version."""


class ConfigError(DataError):
    """Invalid or incomplete pipeline configuration."""


class NumericError(ZslError, ArithmeticError):
    """Non-finite values during optimisation."""

    exit_code = 3


class PipelineError(ZslError):
    """A pipeline stage failed; wraps the original cause."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
        super().__init__(f"stage '{stage}' failed: {cause}")
