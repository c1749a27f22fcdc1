"""Exception types shared across the package.

Both classes derive from ``ValueError`` so callers that only care about
"bad input" can catch that. The CLI maps them onto exit codes.
"""


class InputError(ValueError):
    """Invalid arguments or a violated precondition (CLI exit code 1)."""


class FormatError(ValueError):
    """A malformed file or record (CLI exit code 2).

    ``offset`` is the byte offset of the first bad byte for binary formats,
    ``line``/``column`` locate the problem in text formats.
    """

    def __init__(self, message, *, offset=None, line=None, column=None):
        super().__init__(message)
        self.offset = offset
        self.line = line
        self.column = column
