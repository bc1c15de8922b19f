"""Exception hierarchy shared by every layer of the interpreter."""
from __future__ import annotations


class SPNetError(Exception):
    """Base class for all errors raised by spnet."""


class ParseError(SPNetError):
    """Malformed source or record text.

    ``line`` and ``col`` are 1-based; ``expected`` is the set of tokens
    that would have been accepted at that position (may be empty).
    """

    def __init__(self, message: str, line: int = 1, col: int = 1,
                 expected: frozenset[str] | None = None):
        self.message = message
        self.line = line
        self.col = col
        self.expected = frozenset(expected or ())
        loc = f"{line}:{col}"
        if self.expected:
            message = f"{message} (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(f"{loc}: {message}")


class DuplicateDeclError(ParseError):
    pass


class EvalError(SPNetError):
    """Expression evaluation failed (missing field, overflow, division by zero)."""


class SPNetTypeError(SPNetError):
    """Static or runtime record-type violation."""


class RangeError(SPNetError):
    """Iterator or array index outside its declared bounds."""


class HoldError(SPNetError):
    """Full/empty discipline of a hold variable was violated at run time."""


class ConfigError(SPNetError):
    pass


class DuplicateBox(SPNetError):
    pass


class UnknownIndex(SPNetError):
    pass


class UnknownLabel(SPNetError):
    pass


class DepthLimitExceeded(SPNetError):
    pass


class NonTermination(SPNetError):
    pass
