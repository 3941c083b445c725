"""Conversion between OTSL matrices and content-free HTML tag sequences."""
from __future__ import annotations

from dataclasses import dataclass
from html.parser import HTMLParser
from typing import Iterable, NamedTuple

from .errors import InconsistentGeometry, InvalidMatrix, MalformedHtml
from .otsl import CELL_TOKENS, OtslMatrix, Token, validate

STRUCTURE_TAGS = ("html", "table", "tbody", "tr", "td")


@dataclass(frozen=True)
class HtmlTag:
    name: str
    closing: bool = False
    colspan: int | None = None
    rowspan: int | None = None

    def __post_init__(self):
        if self.name not in STRUCTURE_TAGS:
            raise MalformedHtml(f"unsupported tag <{self.name}>")
        for span in (self.colspan, self.rowspan):
            if span is not None and (self.closing or self.name != "td" or span < 2):
                raise MalformedHtml(f"bad span attribute on {self.name}: {span}")

    def __str__(self) -> str:
        if self.closing:
            return f"</{self.name}>"
        attrs = ""
        if self.rowspan:
            attrs += f" rowspan={self.rowspan}"
        if self.colspan:
            attrs += f" colspan={self.colspan}"
        return f"<{self.name}{attrs}>"


@dataclass(frozen=True)
class HtmlTagSequence:
    tags: tuple[HtmlTag, ...]

    def __str__(self) -> str:
        return "".join(map(str, self.tags))

    def __len__(self) -> int:
        return len(self.tags)

    def __iter__(self):
        return iter(self.tags)

    def cells(self) -> list[list[tuple[int, int]]]:
        """(rowspan, colspan) of every td, grouped by tr."""
        rows: list[list[tuple[int, int]]] = []
        for tag in self.tags:
            if tag.closing:
                continue
            if tag.name == "tr":
                rows.append([])
            elif tag.name == "td":
                if not rows:
                    raise MalformedHtml("<td> outside <tr>")
                rows[-1].append((tag.rowspan or 1, tag.colspan or 1))
        return rows


class CellSpan(NamedTuple):
    hspan_extra: int
    vspan_extra: int

    @property
    def colspan(self) -> int:
        return self.hspan_extra + 1

    @property
    def rowspan(self) -> int:
        return self.vspan_extra + 1


def get_cell_spans(m: OtslMatrix, i: int, j: int) -> CellSpan:
    """Extra columns (run of L to the right) and rows (run of U below) of a cell.

    Entries other than E/F own no cell and return (0, 0).
    """
    if not (0 <= i < m.rows and 0 <= j <= m.cols):
        raise IndexError(f"({i},{j}) outside a {m.rows}x{m.cols + 1} matrix")
    if m.cells[i][j] not in CELL_TOKENS:
        return CellSpan(0, 0)
    return CellSpan(*_spans(m.cells, i, j))


def _spans(cells, i: int, j: int) -> tuple[int, int]:
    row = cells[i]
    rs = 0
    while row[j + 1 + rs] is Token.L:
        rs += 1
    cs = 0
    n = len(cells)
    while i + 1 + cs < n and cells[i + 1 + cs][j] is Token.U:
        cs += 1
    return rs, cs


_OPEN = {name: HtmlTag(name) for name in STRUCTURE_TAGS}
_CLOSE = {name: HtmlTag(name, closing=True) for name in STRUCTURE_TAGS}


def otsl_to_html(m: OtslMatrix) -> HtmlTagSequence:
    """Emit the HTML tag sequence of a valid matrix, row by row.

    E/F open a td carrying its spans, L/U/X emit nothing, N closes the row.
    """
    if not isinstance(m, OtslMatrix):
        report = validate(m)
        if not report.valid:
            raise InvalidMatrix(report.violations[0])
        m = OtslMatrix(m)
    out = [_OPEN["html"], _OPEN["table"], _OPEN["tbody"]]
    td_close = _CLOSE["td"]
    cells = m.cells
    for i, row in enumerate(cells):
        out.append(_OPEN["tr"])
        for j, entry in enumerate(row):
            if entry in CELL_TOKENS:
                rs, cs = _spans(cells, i, j)
                if rs or cs:
                    out.append(HtmlTag("td", colspan=rs + 1 if rs else None,
                                       rowspan=cs + 1 if cs else None))
                else:
                    out.append(_OPEN["td"])
                out.append(td_close)
            elif entry is Token.N:
                out.append(_CLOSE["tr"])
    out += [_CLOSE["tbody"], _CLOSE["table"], _CLOSE["html"]]
    return HtmlTagSequence(tuple(out))


def _span_value(name: str, value: str | None) -> int | None:
    if value is None:
        raise MalformedHtml(f"{name} attribute without a value")
    try:
        n = int(value.strip())
    except ValueError:
        raise MalformedHtml(f"non-integer {name}={value!r}") from None
    if n < 1:
        raise MalformedHtml(f"{name}={n} must be >= 1")
    return n if n > 1 else None


class _StrictParser(HTMLParser):
    """Parses the structure grammar exactly; anything else is malformed."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.tags: list[HtmlTag] = []

    def handle_starttag(self, tag, attrs):
        if tag not in STRUCTURE_TAGS:
            raise MalformedHtml(f"unexpected tag <{tag}>")
        spans = {}
        for key, value in attrs:
            if key in ("colspan", "rowspan") and tag == "td":
                spans[key] = _span_value(key, value)
            else:
                raise MalformedHtml(f"unexpected attribute {key!r} on <{tag}>")
        self.tags.append(HtmlTag(tag, False, spans.get("colspan"), spans.get("rowspan")))

    def handle_startendtag(self, tag, attrs):
        raise MalformedHtml(f"self-closing <{tag}/> is not allowed")

    def handle_endtag(self, tag):
        if tag not in STRUCTURE_TAGS:
            raise MalformedHtml(f"unexpected tag </{tag}>")
        self.tags.append(_CLOSE[tag])

    def handle_data(self, data):
        if data.strip():
            raise MalformedHtml(f"unexpected text {data.strip()[:20]!r}; use filter_structure for content")


def check_nesting(tags: Iterable[HtmlTag]) -> None:
    """Raise MalformedHtml unless tags form html>table>tbody>tr*>td* (html optional)."""
    allowed_parent = {"html": (None,), "table": (None, "html"), "tbody": ("table",),
                      "tr": ("tbody",), "td": ("tr",)}
    stack: list[str] = []
    seen_root = False
    for tag in tags:
        if tag.closing:
            if not stack or stack[-1] != tag.name:
                raise MalformedHtml(f"unbalanced </{tag.name}>")
            stack.pop()
            continue
        parent = stack[-1] if stack else None
        if parent not in allowed_parent[tag.name]:
            raise MalformedHtml(f"<{tag.name}> inside <{parent}>")
        if parent is None:
            if seen_root:
                raise MalformedHtml("more than one root element")
            seen_root = True
        stack.append(tag.name)
    if stack:
        raise MalformedHtml(f"unclosed <{stack[-1]}>")
    if not seen_root:
        raise MalformedHtml("empty tag sequence")


def parse_tags(text: str) -> HtmlTagSequence:
    """Parse a structure-only HTML string (quoted or unquoted span values)."""
    parser = _StrictParser()
    parser.feed(text)
    parser.close()
    seq = HtmlTagSequence(tuple(parser.tags))
    check_nesting(seq)
    return seq


def html_to_otsl(tags) -> OtslMatrix:
    """Rebuild the matrix encoded by a structure tag sequence.

    Each td claims the first free slot of its row, writes F there, L across
    its first row, U down its first column and X inside. Empty and filled
    cells are indistinguishable without content, so every cell comes back F.
    """
    if isinstance(tags, str):
        tags = parse_tags(tags)
    else:
        check_nesting(tags)
    rows = tags.cells()
    n_rows = len(rows)
    if n_rows == 0:
        raise InconsistentGeometry("table has no rows")
    grid: list[dict[int, Token]] = [dict() for _ in range(n_rows)]
    for i, row in enumerate(rows):
        col = 0
        for rowspan, colspan in row:
            occupied = grid[i]
            while col in occupied:
                col += 1
            if i + rowspan > n_rows:
                raise InconsistentGeometry(f"rowspan={rowspan} at row {i} runs past the last row")
            for di in range(rowspan):
                target = grid[i + di]
                for dj in range(colspan):
                    if col + dj in target:
                        raise InconsistentGeometry(f"overlapping cells at ({i + di},{col + dj})")
                    if di == 0:
                        tok = Token.F if dj == 0 else Token.L
                    else:
                        tok = Token.U if dj == 0 else Token.X
                    target[col + dj] = tok
            col += colspan
    width = len(grid[0])
    for i, occupied in enumerate(grid):
        if len(occupied) != width or (occupied and max(occupied) != width - 1):
            raise InconsistentGeometry(f"row {i} covers {len(occupied)} slots, row 0 covers {width}")
    if width == 0:
        raise InconsistentGeometry("table has no cells")
    return OtslMatrix(tuple(tuple(occ[j] for j in range(width)) + (Token.N,) for occ in grid))


class _FilterParser(HTMLParser):
    KEEP = {"html", "table", "thead", "tbody", "tfoot", "tr", "td", "th"}

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.rows: list[list[tuple[int | None, int | None]]] = []
        self.table_depth = 0
        self.in_cell = False
        self.in_row = False
        self.nested = 0
        self.done = False
        self.seen_table = False

    def handle_starttag(self, tag, attrs):
        if self.done:
            return
        if self.in_cell:
            if tag == "table":
                self.nested += 1
            elif self.nested == 0 and tag in ("td", "th", "tr"):
                self.in_cell = False  # implicitly closed cell
            else:
                return
        if tag == "table":
            self.table_depth += 1
            self.seen_table = True
        elif tag == "tr":
            if not self.table_depth:
                raise MalformedHtml("<tr> outside <table>")
            self.rows.append([])
            self.in_row = True
        elif tag in ("td", "th"):
            if not self.in_row:
                raise MalformedHtml(f"<{tag}> outside <tr>")
            spans = {"colspan": None, "rowspan": None}
            for key, value in attrs:
                if key in spans:
                    spans[key] = _span_value(key, value)
            self.rows[-1].append((spans["rowspan"], spans["colspan"]))
            self.in_cell = True

    def handle_endtag(self, tag):
        if self.done:
            return
        if self.in_cell:
            if tag == "table" and self.nested:
                self.nested -= 1
                return
            if self.nested or tag not in ("td", "th", "tr", "table"):
                return
            self.in_cell = False
        if tag == "tr":
            self.in_row = False
        elif tag == "table":
            self.table_depth -= 1
            self.in_row = False
            if self.table_depth == 0:
                self.done = True


def filter_structure(html_with_content: str) -> HtmlTagSequence:
    """Reduce a content-bearing HTML table to its structure tag sequence.

    Text, inline markup and all attributes except colspan/rowspan are
    dropped; th becomes td, and thead/tbody/tfoot sections collapse into one
    tbody under the html/table shell.
    """
    parser = _FilterParser()
    parser.feed(html_with_content)
    parser.close()
    if not parser.seen_table:
        raise MalformedHtml("no <table> element found")
    out = [_OPEN["html"], _OPEN["table"], _OPEN["tbody"]]
    for row in parser.rows:
        out.append(_OPEN["tr"])
        for rowspan, colspan in row:
            out.append(HtmlTag("td", colspan=colspan, rowspan=rowspan))
            out.append(_CLOSE["td"])
        out.append(_CLOSE["tr"])
    out += [_CLOSE["tbody"], _CLOSE["table"], _CLOSE["html"]]
    return HtmlTagSequence(tuple(out))
