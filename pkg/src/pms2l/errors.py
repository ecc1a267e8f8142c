"""Exception hierarchy shared by every stage of the pipeline."""


class Pms2lError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ArgumentError(Pms2lError, ValueError):
    """An argument is outside its documented domain."""


class ConfigurationError(Pms2lError, ValueError):
    """A configuration is inconsistent with the data it is applied to."""


class DataError(Pms2lError, ValueError):
    """Input data violates a content invariant (non-finite value, zero norm, ...)."""

    exit_code = 3


class ParseError(DataError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SplitError(DataError):
    """A stratified split cannot satisfy its per-class constraints."""


class MissingPrerequisite(Pms2lError):
    """A pipeline stage was run before the stage that produces its input."""

    exit_code = 2

    def __init__(self, artifact, stage):
        self.artifact = artifact
        self.stage = stage
        super().__init__(f"missing prerequisite {artifact}; run `pms2l {stage}` (cmd_{stage}) first")
