"""Shared exception types."""


class InputError(ValueError):
    """Raised for malformed user input: bad files, unknown names, arity clashes.

    The command line maps this to exit code 1; everything else is a crash (2).
    """


class UnsupportedFragmentError(InputError):
    """Raised when an expression falls outside the fragment a transformation
    supports.  Carries the rendering of the offending subexpression so the
    caller can point at it."""

    def __init__(self, message: str, offending: str | None = None):
        super().__init__(message if offending is None
                         else f"{message}: {offending}")
        self.offending = offending


class ParseError(InputError):
    """Syntax error in the expression grammar, with a character position."""

    def __init__(self, message: str, position: int, text: str = ""):
        context = ""
        if text:
            lo = max(0, position - 20)
            context = f" near '...{text[lo:position + 20]}...'"
        super().__init__(f"{message} at position {position}{context}")
        self.position = position
