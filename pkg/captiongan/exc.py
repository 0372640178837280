class CaptionError(Exception):
    """Base class for all errors raised by captiongan. Keyword arguments are
    kept as structured context so that they can be logged and serialised by
    the command-line interface."""

    kind = "error"

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self):
        data = {"error": self.kind, "message": self.message}
        data.update(self.context)
        return data


class InputError(CaptionError, ValueError):
    """Invalid user-supplied data: empty texts, dimension mismatches,
    unresolvable image payloads."""

    kind = "input"


class StateError(CaptionError, RuntimeError):
    """The operation is not valid in the current state, e.g. a corpus table
    built with a different encoder than the live backend."""

    kind = "state"


class FormatError(CaptionError):
    """A stored artifact is corrupt, truncated or of an unknown version."""

    kind = "format"


class ConfigError(CaptionError, ValueError):
    kind = "config"


class DivergenceError(CaptionError, ArithmeticError):
    """Training produced a non-finite loss or gradient."""

    kind = "divergence"
