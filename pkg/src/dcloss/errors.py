class DomainError(ValueError):
    """Raised when an argument lies outside an operation's valid domain."""


class FormatError(ValueError):
    """Malformed or incompatible file contents."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TrainingDiverged(RuntimeError):
    """Non-finite loss encountered while training."""

    def __init__(self, epoch, batch, value):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
