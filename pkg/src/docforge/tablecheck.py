"""HTML table structure checking for the unified annotation format.

The format emits a closed tag subset: ``table``, ``thead``, ``tbody``,
``tr``, ``td``, ``th`` structurally, plus ``b``/``i``/``sub``/``sup`` inside
cells. Cell content is otherwise opaque. A table is reconstructed into an
occupancy grid with the standard first-fit algorithm (rows top-down, each
cell anchored at the leftmost uncovered column of its row, rowspan/colspan
marking coverage) and judged valid iff every grid position is covered exactly
once and no span overruns the row count.

Canonicalization rewrites a table with all attributes dropped except
rowspan/colspan (omitted when 1), no whitespace between structural tags, and
cell content preserved byte-exact apart from attribute stripping on the
permitted inline tags.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .docmodel import AnnotationDoc, ElementKind, SampleRecord
from .textfilter import FilterDecision, Reason, discard, retain

STRUCTURAL_TAGS = {"table", "thead", "tbody", "tr", "td", "th"}
INLINE_TAGS = {"b", "i", "sub", "sup"}


class DefectKind(str, Enum):
    RAGGED_ROW = "RaggedRow"
    OVERLAPPING_SPANS = "OverlappingSpans"
    UNCOVERED_POSITION = "UncoveredPosition"
    SPAN_OUT_OF_BOUNDS = "SpanOutOfBounds"
    MALFORMED_MARKUP = "MalformedMarkup"


@dataclass(frozen=True)
class Defect:
    kind: DefectKind
    row: Optional[int] = None
    col: Optional[int] = None
    detail: str = ""


@dataclass(frozen=True)
class CellPlacement:
    row: int
    col: int
    rowspan: int
    colspan: int
    content: str
    is_header: bool


@dataclass(frozen=True)
class TableGrid:
    n_rows: int
    n_cols: int
    cells: tuple[CellPlacement, ...]

    def geometry(self) -> tuple[tuple[int, int, int, int], ...]:
        return tuple((c.row, c.col, c.rowspan, c.colspan) for c in self.cells)


@dataclass(frozen=True)
class TableVerdict:
    valid: bool
    defects: tuple[Defect, ...]


class MalformedMarkupError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset
        self.reason = message


# --- tokenizer and structure parse --------------------------------------------

# One pass over the string; quoted attribute values may contain '>'.
_TAG_RE = re.compile(
    r"""<(/?)([a-zA-Z][a-zA-Z0-9_-]*)((?:"[^"]*"|'[^']*'|[^<>"'])*?)(/?)\s*>"""
)

_DIGITS_RE = re.compile(r"\d+")

_SPAN_ATTR_RES = {
    key: re.compile(
        rf"""(?:^|\s){key}\b\s*(?:=\s*("[^"]*"|'[^']*'|[^\s>/]*))?""", re.IGNORECASE
    )
    for key in ("rowspan", "colspan")
}


@dataclass
class _Cell:
    tag: str
    rowspan: int
    colspan: int
    content: str
    is_header: bool


@dataclass
class _Row:
    cells: list[_Cell]


@dataclass
class _Group:
    kind: Optional[str]  # 'thead' | 'tbody' | None for rows directly under <table>
    rows: list[_Row]


def _span_attr(raw_attrs: str, offset: int, key: str) -> int:
    if not raw_attrs:
        return 1
    m = _SPAN_ATTR_RES[key].search(raw_attrs)
    if m is None:
        return 1
    raw = m.group(1)
    if raw and raw[0] in "\"'":
        raw = raw[1:-1]
    if not raw or not _DIGITS_RE.fullmatch(raw.strip()):
        raise MalformedMarkupError(f"{key} is not a positive integer: {raw!r}", offset)
    value = int(raw)
    if value < 1:
        raise MalformedMarkupError(f"{key} must be >= 1, got {value}", offset)
    return value


def _parse_structure(html: str) -> list[_Group]:
    groups: list[_Group] = []
    state = "start"  # start -> table -> (group) -> row -> cell -> ... -> done
    group: Optional[_Group] = None
    row: Optional[_Row] = None
    cell_tag = ""
    cell_attrs = ""
    cell_offset = 0
    content_start = 0
    pos = 0  # end of the last consumed tag

    def fail(message: str, offset: int) -> None:
        raise MalformedMarkupError(message, offset)

    def check_gap(upto: int) -> None:
        if html[pos:upto].strip():
            if state == "start":
                fail("content before <table>", pos)
            if state == "done":
                fail("content after </table>", pos)
            fail("text outside cells", pos)

    for m in _TAG_RE.finditer(html):
        start = m.start()
        closing_mark, raw_name = m.group(1, 2)
        name = raw_name.lower()
        closing = closing_mark == "/"

        if state == "cell":
            # Inline and unknown tags are opaque cell content; only the
            # structural subset can end (or corrupt) the cell.
            if name in STRUCTURAL_TAGS:
                if closing and name == cell_tag:
                    assert row is not None
                    row.cells.append(
                        _Cell(
                            tag=cell_tag,
                            rowspan=_span_attr(cell_attrs, cell_offset, "rowspan"),
                            colspan=_span_attr(cell_attrs, cell_offset, "colspan"),
                            content=html[content_start:start],
                            is_header=cell_tag == "th" or (group is not None and group.kind == "thead"),
                        )
                    )
                    state = "row"
                else:
                    fail(f"structural tag <{'/' if closing else ''}{name}> inside a cell", start)
            pos = m.end()
            continue

        check_gap(start)
        pos = m.end()
        self_closing = m.group(4) == "/"

        if state == "start":
            if name == "table" and not closing and not self_closing:
                state = "table"
            else:
                fail("expected <table> open tag", start)
            continue

        if state == "done":
            fail("content after </table>", start)
        if name not in STRUCTURAL_TAGS:
            fail(f"tag <{name}> not allowed outside cells", start)
        if self_closing:
            fail(f"self-closing <{name}/> not allowed", start)

        if state == "table":
            if name in ("thead", "tbody") and not closing:
                group = _Group(kind=name, rows=[])
                groups.append(group)
                state = "group"
            elif name == "tr" and not closing:
                if group is None or group.kind is not None:
                    group = _Group(kind=None, rows=[])
                    groups.append(group)
                row = _Row(cells=[])
                group.rows.append(row)
                state = "row"
            elif name == "table" and closing:
                state = "done"
            else:
                fail(f"unexpected <{'/' if closing else ''}{name}> at table level", start)
        elif state == "group":
            assert group is not None
            if name == "tr" and not closing:
                row = _Row(cells=[])
                group.rows.append(row)
                state = "row"
            elif closing and name == group.kind:
                group = None
                state = "table"
            else:
                fail(f"unexpected <{'/' if closing else ''}{name}> inside <{group.kind}>", start)
        elif state == "row":
            if name in ("td", "th") and not closing:
                cell_tag = name
                cell_attrs = m.group(3)
                cell_offset = start
                content_start = m.end()
                state = "cell"
            elif name == "tr" and closing:
                row = None
                state = "group" if group is not None and group.kind is not None else "table"
            else:
                fail(f"unexpected <{'/' if closing else ''}{name}> inside <tr>", start)

    check_gap(len(html))
    if state != "done":
        fail("unclosed table structure", len(html))
    if not any(g.rows for g in groups):
        fail("table has no rows", len(html))
    if not any(cell for g in groups for r in g.rows for cell in r.cells):
        fail("table has no cells", len(html))
    return groups


# --- grid reconstruction ----------------------------------------------------


def _fill_grid(rows: list[list[tuple[int, int, str, bool]]]) -> TableGrid:
    """First-fit placement of (rowspan, colspan, content, is_header) rows."""
    taken: set[tuple[int, int]] = set()
    placements: list[CellPlacement] = []
    for r, cells in enumerate(rows):
        c = 0
        for rowspan, colspan, content, is_header in cells:
            while (r, c) in taken:
                c += 1
            placements.append(CellPlacement(r, c, rowspan, colspan, content, is_header))
            for rr in range(r, r + rowspan):
                for cc in range(c, c + colspan):
                    taken.add((rr, cc))
            c += colspan
    n_rows = len(rows)
    n_cols = max((p.col + p.colspan for p in placements), default=0)
    return TableGrid(n_rows=n_rows, n_cols=n_cols, cells=tuple(placements))


def parse_table(html: str) -> TableGrid:
    """Parse one table into its occupancy grid.

    Raises MalformedMarkupError for structure the unified format never emits:
    unknown or misplaced structural tags, unclosed elements, text outside
    cells, non-positive span attributes, or a table without cells.
    """
    stripped = html.lstrip()
    offset_shift = len(html) - len(stripped)
    try:
        groups = _parse_structure(stripped)
    except MalformedMarkupError as exc:
        if offset_shift:
            raise MalformedMarkupError(exc.reason, exc.offset + offset_shift) from None
        raise
    flat = [
        [(c.rowspan, c.colspan, c.content, c.is_header) for c in row.cells]
        for g in groups
        for row in g.rows
    ]
    return _fill_grid(flat)


def table_valid(grid: TableGrid) -> TableVerdict:
    """Judge structural validity: full single coverage, spans in bounds."""
    defects: list[Defect] = []
    coverage = [[0] * grid.n_cols for _ in range(grid.n_rows)]
    for cell in grid.cells:
        if cell.row + cell.rowspan > grid.n_rows or cell.col + cell.colspan > grid.n_cols:
            defects.append(Defect(DefectKind.SPAN_OUT_OF_BOUNDS, cell.row, cell.col))
        for rr in range(cell.row, min(cell.row + cell.rowspan, grid.n_rows)):
            for cc in range(cell.col, min(cell.col + cell.colspan, grid.n_cols)):
                coverage[rr][cc] += 1
    for r in range(grid.n_rows):
        covered = 0
        for c in range(grid.n_cols):
            count = coverage[r][c]
            if count == 0:
                defects.append(Defect(DefectKind.UNCOVERED_POSITION, r, c))
            elif count > 1:
                defects.append(Defect(DefectKind.OVERLAPPING_SPANS, r, c))
            if count >= 1:
                covered += 1
        if covered != grid.n_cols:
            defects.append(Defect(DefectKind.RAGGED_ROW, r, detail=f"{covered} of {grid.n_cols} columns covered"))
    return TableVerdict(valid=not defects, defects=tuple(defects))


def check_table(html: str) -> TableVerdict:
    """Parse + validate, folding markup errors into the verdict."""
    try:
        grid = parse_table(html)
    except MalformedMarkupError as exc:
        return TableVerdict(valid=False, defects=(Defect(DefectKind.MALFORMED_MARKUP, detail=str(exc)),))
    return table_valid(grid)


# --- canonical form ---------------------------------------------------------

_INLINE_ATTR_RE = re.compile(r"<\s*(/?)\s*(b|i|sub|sup)\b[^>]*>", re.IGNORECASE)


def _canonical_content(content: str) -> str:
    # Permitted inline tags lose their attributes; everything else is opaque.
    return _INLINE_ATTR_RE.sub(lambda m: f"<{m.group(1)}{m.group(2).lower()}>", content)


def canonicalize_table(html: str) -> str:
    """Rewrite a table in canonical form.

    Only rowspan/colspan survive (and only when > 1); structural tags abut
    with no whitespace; thead/tbody grouping and cell order are preserved.
    """
    groups = _parse_structure(html.lstrip())
    out: list[str] = ["<table>"]
    for group in groups:
        if group.kind:
            out.append(f"<{group.kind}>")
        for row in group.rows:
            out.append("<tr>")
            for cell in row.cells:
                attrs = ""
                if cell.rowspan > 1:
                    attrs += f' rowspan="{cell.rowspan}"'
                if cell.colspan > 1:
                    attrs += f' colspan="{cell.colspan}"'
                out.append(f"<{cell.tag}{attrs}>{_canonical_content(cell.content)}</{cell.tag}>")
            out.append("</tr>")
        if group.kind:
            out.append(f"</{group.kind}>")
    out.append("</table>")
    return "".join(out)


# --- filter entry points ----------------------------------------------------


def extract_tables(doc: AnnotationDoc) -> list[str]:
    """Table span sources in document order."""
    return [s.source for s in doc.elements if s.kind == ElementKind.TABLE]


def table_filter(sample: SampleRecord) -> FilterDecision:
    """Retain iff every table in the sample parses and is structurally valid."""
    for index, source in enumerate(extract_tables(sample.annotation)):
        if not check_table(source).valid:
            return discard(sample.sample_id, Reason.INVALID_TABLE, element_index=index)
    return retain(sample.sample_id)
