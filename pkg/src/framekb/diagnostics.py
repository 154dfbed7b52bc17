"""Positioned diagnostics shared by every stage of the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"
    NOTE = "note"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: str
    message: str
    line: int = 0
    col: int = 0
    file: str | None = None

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def with_file(self, file: str) -> Diagnostic:
        return Diagnostic(self.severity, self.code, self.message, self.line, self.col, file)

    def format(self) -> str:
        """Render as ``file:line:col: severity CODE message``.

        Without a known line the position is just ``file:``.
        """
        where = "%s:%d:%d" % (self.file or "<input>", self.line, self.col) if self.line else (self.file or "<input>")
        return "%s: %s %s %s" % (where, self.severity.value, self.code, self.message)

    def __str__(self) -> str:
        return self.format()


def error(code: str, message: str, line: int = 0, col: int = 0, file: str | None = None) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, line, col, file)


def warning(code: str, message: str, line: int = 0, col: int = 0, file: str | None = None) -> Diagnostic:
    return Diagnostic(Severity.WARNING, code, message, line, col, file)


def where(pos) -> tuple:
    """``(line, col, file)`` of an optional source position."""
    if pos is None:
        return 0, 0, None
    return pos.line, pos.col, getattr(pos, "file", None)


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diagnostics)


class DiagnosticError(Exception):
    """Raised when a stage produced at least one error-severity diagnostic.

    All diagnostics of the stage (warnings included) travel with the exception
    so callers can report them in one batch.
    """

    def __init__(self, diagnostics: Iterable[Diagnostic]):
        self.diagnostics = list(diagnostics)
        errors = [d for d in self.diagnostics if d.is_error]
        first = errors[0].format() if errors else "unknown error"
        more = " (+%d more)" % (len(errors) - 1) if len(errors) > 1 else ""
        super().__init__(first + more)

    @property
    def codes(self) -> list[str]:
        return [d.code for d in self.diagnostics if d.is_error]
