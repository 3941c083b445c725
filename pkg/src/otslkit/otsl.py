"""The OTSL table-structure language: tokens, sequences and the R x (C+1) matrix.

A table with R rows and C columns is written row-major as R * (C + 1) tokens;
every row holds C cell slots followed by a single ``N`` that ends the row.
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .errors import InvalidStructure, LengthMismatch, UnknownToken


class Token(str, enum.Enum):
    F = "F"  # filled cell
    E = "E"  # empty cell
    L = "L"  # merges with the left neighbour
    U = "U"  # merges with the upper neighbour
    X = "X"  # merges with both left and upper neighbours
    N = "N"  # end of row

    def __str__(self) -> str:
        return self.value


VOCAB = frozenset(t.value for t in Token)
_BY_CHAR = {t.value: t for t in Token}

CELL_TOKENS = frozenset({Token.F, Token.E})
SPAN_TOKENS = frozenset({Token.L, Token.U, Token.X})

# Grammar table: the neighbours each merge token may attach to.
# Amend here if the rule set changes; validate() and align() both read it.
LEFT_OF_L = frozenset({Token.F, Token.E, Token.L})
ABOVE_U = frozenset({Token.F, Token.E, Token.U, Token.X})
LEFT_OF_X = frozenset({Token.X, Token.U})
ABOVE_X = frozenset({Token.X, Token.L})


@dataclass(frozen=True)
class OtslSequence:
    """A raw token string, possibly not a well-formed table."""

    tokens: tuple[Token, ...] = ()
    source_note: str | None = None

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __str__(self) -> str:
        return "".join(t.value for t in self.tokens)


class Violation(NamedTuple):
    row: int
    col: int
    token: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"({self.row},{self.col}) {self.token}: {self.rule}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"valid": self.valid, "violations": [v._asdict() for v in self.violations]}


def _split_sentinels(sentinels) -> tuple[str, str]:
    if not sentinels:
        return "", ""
    if isinstance(sentinels, str):
        return sentinels, sentinels
    start, stop = sentinels
    return start or "", stop or ""


def strip_text(text: str, sentinels=None) -> tuple[str, list[int]]:
    """Remove whitespace and a leading/trailing sentinel pair.

    Returns the stripped string together with the original position of every
    surviving character, so errors can point back into the caller's text.
    """
    start, stop = _split_sentinels(sentinels)
    lo, hi = 0, len(text)
    while lo < hi and text[lo].isspace():
        lo += 1
    while hi > lo and text[hi - 1].isspace():
        hi -= 1
    if start and text.startswith(start, lo):
        lo += len(start)
    if stop and hi - len(stop) >= lo and text.endswith(stop, lo, hi):
        hi -= len(stop)
    kept = [i for i in range(lo, hi) if not text[i].isspace()]
    return "".join(text[i] for i in kept), kept


def parse(text: str, sentinels=None, source_note: str | None = None) -> OtslSequence:
    """Map a character string to OTSL tokens, one per character.

    ``sentinels`` is either a single string used on both ends or a
    ``(start, stop)`` pair; matching sentinels are stripped, never stored.
    """
    body, positions = strip_text(text, sentinels)
    tokens = []
    for ch, pos in zip(body, positions):
        tok = _BY_CHAR.get(ch)
        if tok is None:
            raise UnknownToken(pos, ch)
        tokens.append(tok)
    return OtslSequence(tuple(tokens), source_note)


def validate(grid: Sequence[Sequence]) -> ValidationReport:
    """Check N placement and the merge grammar on a rectangular token grid.

    Rules per cell, in order: N only (and always) in the last column; no U/X
    in the first row; no L/X in the first column; L must follow F, E or L;
    U must sit under F, E, U or X; X needs X/U on its left and X/L above.
    """
    if not grid or len(grid[0]) < 2:
        raise ValueError("grid needs at least 1 row and 2 columns")
    width = len(grid[0])
    if any(len(row) != width for row in grid):
        raise ValueError("grid is not rectangular")
    last = width - 1
    out = []

    def bad(i, j, tok, rule, msg):
        out.append(Violation(i, j, str(tok), rule, msg))

    for i, row in enumerate(grid):
        for j, raw in enumerate(row):
            if j != last and raw in CELL_TOKENS:
                continue
            tok = _BY_CHAR.get(raw) if isinstance(raw, str) else None
            if tok is None:
                bad(i, j, raw, "vocabulary", "not an OTSL token")
                continue
            if j == last:
                if tok is not Token.N:
                    bad(i, j, tok, "n-placement", "last column must be N")
                continue
            if tok is Token.N:
                bad(i, j, tok, "n-placement", "N outside the last column")
                continue
            if tok in CELL_TOKENS:
                continue
            if i == 0 and tok in (Token.U, Token.X):
                bad(i, j, tok, "first-row", f"{tok} has no upper neighbour")
            if j == 0 and tok in (Token.L, Token.X):
                bad(i, j, tok, "first-column", f"{tok} has no left neighbour")
            left = _BY_CHAR.get(row[j - 1]) if j > 0 else None
            up = _BY_CHAR.get(grid[i - 1][j]) if i > 0 else None
            if tok is Token.L and j > 0 and left not in LEFT_OF_L:
                bad(i, j, tok, "left-merge", f"left neighbour is {left}, expected F, E or L")
            elif tok is Token.U and i > 0 and up not in ABOVE_U:
                bad(i, j, tok, "up-merge", f"upper neighbour is {up}, expected F, E, U or X")
            elif tok is Token.X and i > 0 and j > 0:
                if left not in LEFT_OF_X:
                    bad(i, j, tok, "cross-merge", f"left neighbour is {left}, not X or U")
                if up not in ABOVE_X:
                    bad(i, j, tok, "cross-merge", f"upper neighbour is {up}, not X or L")
    return ValidationReport(tuple(out))


@dataclass(frozen=True)
class OtslMatrix:
    """A valid OTSL table: ``rows`` x ``cols`` cells plus the trailing N column.

    Construction validates; an instance always satisfies the grammar.
    """

    cells: tuple[tuple[Token, ...], ...]
    rows: int = field(init=False)
    cols: int = field(init=False)

    def __post_init__(self):
        cells = tuple(_coerce_row(row) for row in self.cells)
        if not cells or len(cells[0]) < 2:
            raise InvalidStructure(Violation(-1, -1, "", "shape", "need at least 1 row and 1 column"))
        width = len(cells[0])
        if any(len(r) != width for r in cells):
            raise InvalidStructure(Violation(-1, -1, "", "shape", "rows of unequal length"))
        report = validate(cells)
        if not report.valid:
            raise InvalidStructure(report.violations[0])
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "rows", len(cells))
        object.__setattr__(self, "cols", width - 1)

    def __getitem__(self, ij: tuple[int, int]) -> Token:
        i, j = ij
        return self.cells[i][j]

    def tokens(self) -> Iterable[Token]:
        for row in self.cells:
            yield from row

    def __str__(self) -> str:
        return serialize(self)


def _coerce(t) -> Token:
    if isinstance(t, Token):
        return t
    tok = _BY_CHAR.get(t)
    if tok is None:
        raise UnknownToken(-1, str(t))
    return tok


def _coerce_row(row) -> tuple[Token, ...]:
    # Token is a str subclass, so _BY_CHAR maps tokens to themselves as well
    try:
        out = tuple(map(_BY_CHAR.get, row))
    except TypeError:
        out = (None,)
    if None in out:
        return tuple(_coerce(t) for t in row)
    return out


def _as_tokens(seq) -> tuple[Token, ...]:
    if isinstance(seq, OtslSequence):
        return seq.tokens
    if isinstance(seq, str):
        return parse(seq).tokens
    return _coerce_row(seq)


def to_matrix(seq, rows: int, cols: int) -> OtslMatrix:
    """Reshape a sequence of exactly ``rows * (cols + 1)`` tokens row-major."""
    tokens = _as_tokens(seq)
    width = cols + 1
    if rows < 1 or cols < 1:
        raise LengthMismatch(f"grid {rows}x{cols} is empty")
    if len(tokens) != rows * width:
        raise LengthMismatch(f"{len(tokens)} tokens, expected {rows * width} for a {rows}x{cols} grid")
    return OtslMatrix(tuple(tokens[i * width:(i + 1) * width] for i in range(rows)))


def infer_shape(seq) -> tuple[int, int]:
    """Grid counts implied by a sequence's own N tokens."""
    tokens = _as_tokens(seq)
    rows = sum(1 for t in tokens if t is Token.N)
    if rows == 0:
        raise LengthMismatch("sequence contains no N token")
    if len(tokens) % rows:
        raise LengthMismatch(f"{len(tokens)} tokens do not split into {rows} equal rows")
    cols = len(tokens) // rows - 1
    if cols < 1:
        raise LengthMismatch("rows have no cells")
    return rows, cols


def from_text(text: str, sentinels=None) -> OtslMatrix:
    """Parse a complete OTSL string whose shape is given by its N tokens."""
    seq = parse(text, sentinels)
    return to_matrix(seq, *infer_shape(seq))


def validate_sequence(seq, rows: int | None = None, cols: int | None = None) -> ValidationReport:
    """Validate a flat sequence, reporting shape problems as violations too."""
    tokens = _as_tokens(seq)
    if rows is None or cols is None:
        try:
            rows, cols = infer_shape(tokens)
        except LengthMismatch as exc:
            return ValidationReport((Violation(-1, -1, "", "shape", str(exc)),))
    width = cols + 1
    if rows < 1 or cols < 1 or len(tokens) != rows * width:
        msg = f"{len(tokens)} tokens, expected {rows * width} for a {rows}x{cols} grid"
        return ValidationReport((Violation(-1, -1, "", "shape", msg),))
    return validate([tokens[i * width:(i + 1) * width] for i in range(rows)])


def serialize(m: OtslMatrix) -> str:
    return "".join(t.value for row in m.cells for t in row)


def is_complex(m: OtslMatrix) -> bool:
    """True when the table has at least one merged cell."""
    return any(t in SPAN_TOKENS for t in m.tokens())


def random_valid(rows: int, cols: int, seed: int, span_prob: float = 0.3,
                 empty_prob: float = 0.0) -> OtslMatrix:
    """Seeded generator of valid matrices built from rectangular merges.

    Slots are visited row-major; at each free slot a merge is started with
    probability ``span_prob`` (its extent drawn uniformly from what still fits),
    otherwise a single cell is placed. Top-left cells are E with probability
    ``empty_prob``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    rng = random.Random(seed)
    grid: list[list[Token | None]] = [[None] * cols + [Token.N] for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            if grid[i][j] is not None:
                continue
            h = w = 1
            if span_prob > 0 and rng.random() < span_prob:
                max_w = 0
                while j + max_w < cols and grid[i][j + max_w] is None:
                    max_w += 1
                max_h = 1
                while i + max_h < rows and all(grid[i + max_h][j + k] is None for k in range(max_w)):
                    max_h += 1
                if max_w * max_h > 1:
                    while (h, w) == (1, 1):
                        h = rng.randint(1, max_h)
                        w = rng.randint(1, max_w)
            head = Token.E if empty_prob > 0 and rng.random() < empty_prob else Token.F
            for di in range(h):
                for dj in range(w):
                    if di == 0 and dj == 0:
                        tok = head
                    elif di == 0:
                        tok = Token.L
                    elif dj == 0:
                        tok = Token.U
                    else:
                        tok = Token.X
                    grid[i + di][j + dj] = tok
    return OtslMatrix(tuple(tuple(r) for r in grid))
