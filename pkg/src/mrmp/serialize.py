"""Line-oriented versioned text formats shared by database, scenario and
trace files.

Numbers are written with 9 significant digits, which round-trips exactly
through ``float`` and keeps files diffable.  Every file ends with an
``end`` line so truncation is always detectable.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class FormatError(ValueError):
    """Malformed or truncated file content, with a line position."""


def fmt(x: float) -> str:
    return format(float(x), ".9g")


def fmt_row(vals: Iterable[float]) -> str:
    return " ".join(fmt(v) for v in vals)


class LineReader:
    """Tokenized reader with positional diagnostics."""

    def __init__(self, text: str, name: str = "<input>"):
        self.name = name
        self.lines = text.splitlines()
        self.pos = 0

    def error(self, msg: str) -> FormatError:
        return FormatError(f"{self.name}: line {self.pos}: {msg}")

    def next_line(self) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise FormatError(f"{self.name}: line {self.pos}: unexpected end of file")

    def tokens(self) -> list:
        return self.next_line().split()

    def expect(self, keyword: str) -> list:
        toks = self.tokens()
        if toks[0] != keyword:
            raise self.error(f"expected '{keyword}', found '{toks[0]}'")
        return toks[1:]

    def floats(self, toks: Sequence[str], n: int | None = None) -> np.ndarray:
        try:
            vals = np.array([float(t) for t in toks], dtype=float)
        except ValueError as exc:
            raise self.error(f"bad number: {exc}") from None
        if n is not None and len(vals) != n:
            raise self.error(f"expected {n} numbers, found {len(vals)}")
        return vals

    def ints(self, toks: Sequence[str], n: int | None = None) -> list:
        try:
            vals = [int(t) for t in toks]
        except ValueError as exc:
            raise self.error(f"bad integer: {exc}") from None
        if n is not None and len(vals) != n:
            raise self.error(f"expected {n} integers, found {len(vals)}")
        return vals


def check_header(reader: LineReader, tag: str, version: int) -> None:
    toks = reader.tokens()
    if len(toks) != 2 or toks[0] != tag:
        raise reader.error(f"not a {tag} file")
    if toks[1] != str(version):
        raise reader.error(f"unsupported {tag} version {toks[1]} (expected {version})")


def check_end(reader: LineReader) -> None:
    toks = reader.tokens()
    if toks != ["end"]:
        raise reader.error(f"expected 'end', found '{' '.join(toks)}'")
