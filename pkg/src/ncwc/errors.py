"""Error types shared by every connector module.

Every failure carries a stable ``code`` string (``E_NO_TABLE``,
``E_DUP_ID``, ...) so callers and the CLI can match on it without parsing
messages.
"""

from __future__ import annotations


class ConnectorError(Exception):
    """Domain error with a stable error code."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class CrashInjected(BaseException):
    """Simulated hard stop, raised by test failpoints.

    Deliberately not an ``Exception``: recovery code must never treat an
    injected crash as a recoverable error, only release in-process state
    and let it propagate, the way a dying process would.
    """


class ParseError(ConnectorError):
    """Statement rejected by the mini-HQL parser; carries the position."""

    def __init__(self, line: int, col: int, expected: tuple[str, ...], found: str):
        self.line = line
        self.col = col
        self.expected = expected
        self.found = found
        want = ", ".join(expected)
        super().__init__(
            "E_PARSE", f"line {line}:{col}: expected {want}, found {found!r}"
        )
