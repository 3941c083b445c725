"""Grid-based alignment: repair a raw predicted OTSL string to a given grid.

The repair runs in a fixed order so each phase sees the final geometry of the
previous one:

1. length   -- truncate the tail or pad the tail with F to R * (C + 1) tokens
2. N period -- force N into every last-column slot, turn stray N into F
3. grammar  -- one row-major pass turning misplaced L/U/X into F, consulting
               only left and upper neighbours that are already final
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import BadGrid
from .otsl import (ABOVE_U, ABOVE_X, LEFT_OF_L, LEFT_OF_X, OtslMatrix,
                   Token, _BY_CHAR, _as_tokens, strip_text)

ACTIONS = ("trimmed", "padded", "forced-N", "N-to-F", "L-to-F", "U-to-F", "X-to-F", "dropped-char")

PAD_TOKEN = Token.F

_TO_F = {Token.L: "L-to-F", Token.U: "U-to-F", Token.X: "X-to-F"}
_CH = {t: t.value for t in Token}


class RepairEntry(NamedTuple):
    where: int | tuple[int, int]
    action: str
    detail: str = ""

    def to_dict(self) -> dict:
        where = list(self.where) if isinstance(self.where, tuple) else self.where
        return {"where": where, "action": self.action, "detail": self.detail}


@dataclass
class RepairLog:
    entries: list[RepairEntry] = field(default_factory=list)

    def add(self, where, action: str, detail: str = "") -> None:
        self.entries.append(RepairEntry(where, action, detail))

    @property
    def counts(self) -> Counter:
        return Counter(e.action for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def to_dict(self) -> dict:
        return {"counts": dict(self.counts), "entries": [e.to_dict() for e in self.entries]}


def align(raw, rows: int, cols: int, max_len: int | None = None,
          log: RepairLog | None = None) -> tuple[OtslMatrix, RepairLog]:
    """Repair ``raw`` into a valid ``rows`` x ``cols`` matrix.

    ``max_len`` caps the raw input before alignment (the decoder's maximum
    prediction length); ``None`` disables the cap. Every change is recorded in
    the returned log; the log is empty exactly when the input was already a
    valid sequence for this grid.
    """
    if rows < 1 or cols < 1:
        raise BadGrid(f"grid {rows}x{cols}: rows and cols must both be >= 1")
    log = log if log is not None else RepairLog()
    tokens = list(_as_tokens(raw))
    width = cols + 1
    total = rows * width

    limit = total if max_len is None else min(total, max_len)
    if len(tokens) > limit:
        for p in range(limit, len(tokens)):
            log.add(p, "trimmed", _CH[tokens[p]])
        del tokens[limit:]
    if len(tokens) < total:
        for p in range(len(tokens), total):
            log.add(p, "padded", _CH[PAD_TOKEN])
        tokens.extend([PAD_TOKEN] * (total - len(tokens)))

    for p, tok in enumerate(tokens):
        if p % width == cols:
            if tok is not Token.N:
                log.add(p, "forced-N", f"{_CH[tok]} -> N")
                tokens[p] = Token.N
        elif tok is Token.N:
            log.add(p, "N-to-F", "N outside the last column")
            tokens[p] = Token.F

    grid = [tokens[i * width:(i + 1) * width] for i in range(rows)]
    for i, row in enumerate(grid):
        for j in range(cols):
            tok = row[j]
            if tok not in _TO_F or _fits(grid, i, j, tok):
                continue
            reason = _misplaced(grid, i, j, tok)
            if reason:
                log.add((i, j), _TO_F[tok], reason)
                row[j] = Token.F
    return OtslMatrix(tuple(tuple(r) for r in grid)), log


def _fits(grid, i: int, j: int, tok: Token) -> bool:
    if tok is Token.L:
        return j > 0 and grid[i][j - 1] in LEFT_OF_L
    if tok is Token.U:
        return i > 0 and grid[i - 1][j] in ABOVE_U
    return i > 0 and j > 0 and grid[i][j - 1] in LEFT_OF_X and grid[i - 1][j] in ABOVE_X


def _misplaced(grid, i: int, j: int, tok: Token) -> str | None:
    if i == 0 and tok is not Token.L:
        return "first row"
    if j == 0 and tok is not Token.U:
        return "first column"
    if tok is Token.L:
        left = grid[i][j - 1]
        return None if left in LEFT_OF_L else f"left neighbour {_CH[left]}"
    if tok is Token.U:
        up = grid[i - 1][j]
        return None if up in ABOVE_U else f"upper neighbour {_CH[up]}"
    left, up = grid[i][j - 1], grid[i - 1][j]
    if left not in LEFT_OF_X or up not in ABOVE_X:
        return f"neighbours left={_CH[left]} up={_CH[up]}"
    return None


def align_text(line: str, rows: int, cols: int, sentinels=None,
               max_len: int | None = None) -> tuple[OtslMatrix, RepairLog]:
    """Parse and align noisy model output; unknown characters are dropped and logged."""
    body, positions = strip_text(line, sentinels)
    log = RepairLog()
    tokens = []
    for ch, pos in zip(body, positions):
        tok = _BY_CHAR.get(ch)
        if tok is None:
            log.add(pos, "dropped-char", repr(ch))
        else:
            tokens.append(tok)
    return align(tokens, rows, cols, max_len=max_len, log=log)
