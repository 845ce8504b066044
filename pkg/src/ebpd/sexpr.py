"""Minimal s-expression reader that keeps source positions for diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Union


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    length: int = 1

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: str  # "error" | "warning"
    message: str
    span: SourceSpan

    def __str__(self) -> str:
        return f"{self.span}: {self.severity}: {self.message}"


class ParseError(Exception):
    """Raised when a document cannot be produced. Carries every diagnostic."""

    def __init__(self, diagnostics: List[ParseDiagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))

    @property
    def span(self) -> SourceSpan:
        return self.diagnostics[0].span


@dataclass(frozen=True)
class Symbol:
    text: str
    span: SourceSpan = field(compare=False)

    @property
    def lower(self) -> str:
        return self.text.lower()

    def __repr__(self) -> str:
        return self.text


@dataclass(frozen=True)
class SList:
    items: tuple
    span: SourceSpan = field(compare=False)

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def __iter__(self) -> Iterator["Node"]:
        return iter(self.items)

    def head(self) -> Optional[str]:
        """Lower-cased leading symbol, or None for an empty/compound head."""
        if self.items and isinstance(self.items[0], Symbol):
            return self.items[0].lower
        return None

    def __repr__(self) -> str:
        return "(" + " ".join(map(repr, self.items)) + ")"


Node = Union[Symbol, SList]

_DELIMS = set("();")


def _error(msg: str, file: str, line: int, col: int, length: int = 1) -> ParseError:
    return ParseError([ParseDiagnostic("error", msg, SourceSpan(file, line, col, max(1, length)))])


def read_all(text: str, file: str = "<string>") -> List[Node]:
    """Read every top-level form in ``text``. ``;`` starts a line comment."""
    forms: List[Node] = []
    # stack of (items, span-start) for open lists
    stack: List[tuple] = []
    i, n = 0, len(text)
    line, col = 1, 1
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line, col = line + 1, 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "(":
            stack.append(([], line, col))
            i += 1
            col += 1
            continue
        if ch == ")":
            if not stack:
                raise _error("unbalanced ')'", file, line, col)
            items, l0, c0 = stack.pop()
            length = (col - c0 + 1) if line == l0 else 1
            node = SList(tuple(items), SourceSpan(file, l0, c0, length))
            (stack[-1][0] if stack else forms).append(node)
            i += 1
            col += 1
            continue
        start = i
        while i < n and not text[i].isspace() and text[i] not in _DELIMS:
            i += 1
        tok = text[start:i]
        sym = Symbol(tok, SourceSpan(file, line, col, len(tok)))
        col += i - start
        (stack[-1][0] if stack else forms).append(sym)
    if stack:
        _, l0, c0 = stack[-1]
        raise _error("unbalanced '(': missing ')'", file, l0, c0)
    return forms


def read_one(text: str, file: str = "<string>") -> Node:
    forms = read_all(text, file)
    if len(forms) != 1:
        span = forms[1].span if len(forms) > 1 else SourceSpan(file, 1, 1, 1)
        raise ParseError([ParseDiagnostic("error", f"expected exactly one top-level form, found {len(forms)}", span)])
    return forms[0]
