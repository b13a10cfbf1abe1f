"""Exception hierarchy for h2s."""


class H2SError(Exception):
    """Base class for all h2s errors."""


class ValidationError(H2SError, ValueError):
    """Invalid input data, configuration, or arguments."""


class IngestError(ValidationError):
    """Malformed input file."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class ConvergenceError(H2SError):
    """A sampler or optimizer could not produce a usable result."""


class StageError(H2SError):
    """Failure inside a pipeline stage; the message starts with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
