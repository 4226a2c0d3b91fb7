"""Exception types used across the package."""


class GtvmError(Exception):
    """Base class for all errors raised by gtvm."""


class SpaceError(GtvmError):
    """Model-space precondition violation (dead element, kind mismatch, ...)."""


class UnknownTypeError(SpaceError):
    """A dotted type name could not be resolved against the registry."""


class SnapshotError(GtvmError):
    """Malformed .gms snapshot text."""

    def __init__(self, msg, line=None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class PatternError(GtvmError):
    """Invalid pattern definition (arity, recursion, scoping, ...)."""


class ParseError(GtvmError):
    """VTCL syntax error with source position."""

    def __init__(self, msg, line, col):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


class LinkError(GtvmError):
    """Cross-machine reference or rule validation failure."""


class MatcherError(GtvmError):
    """Matcher misuse, e.g. registering a recursive pattern incrementally."""


class ExecError(GtvmError):
    """Runtime failure while executing a machine."""


class DivergenceError(ExecError):
    """An iterate loop exceeded its step budget."""
