"""Table injection and HTML page composition for rendering.

Generated text is Markdown-ish; this module turns it into a self-contained
HTML page with a fixed width and one, two, or three column containers. Tables
pass through verbatim, formulas stay as dollar-delimited text for the math
renderer script referenced by the page template, and a light Markdown subset
(headings, emphasis, lists) becomes HTML.
"""

from __future__ import annotations

import html as html_escape
import random
import re
from dataclasses import dataclass

from ..docmodel import ElementKind, parse_annotation
from .prompts import COLUMN_SEPARATOR

DEFAULT_PAGE_WIDTH_PX = 1240


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class HtmlDocument:
    html: str
    annotation: str
    columns: int


_PARAGRAPH_BREAK_RE = re.compile(r"\n[ \t]*\n+")


def _plain_breaks(text: str) -> list[tuple[int, int]]:
    """Paragraph-break runs that lie wholly inside plain-text spans.

    Breaks inside tables or display formulas are not usable insertion points;
    inserting there would split the element.
    """
    doc = parse_annotation(text)
    plain = [(s.start, s.end) for s in doc.elements if s.kind == ElementKind.PLAIN_TEXT]
    breaks = []
    for m in _PARAGRAPH_BREAK_RE.finditer(text):
        if any(start <= m.start() and m.end() <= end for start, end in plain):
            breaks.append((m.start(), m.end()))
    return breaks


def inject_table(text: str, table_html: str, seed: int) -> str:
    """Insert a table at a uniformly chosen paragraph boundary.

    Deterministic for a given seed. With fewer than two paragraphs the table
    goes at the end; empty text yields the table alone.
    """
    if not text.strip():
        return table_html
    breaks = _plain_breaks(text)
    if not breaks:
        return f"{text.rstrip()}\n\n{table_html}"
    rng = random.Random(f"inject:{seed}")
    # Positions: before everything, inside each break, after everything.
    position = rng.randrange(len(breaks) + 2)
    if position == 0:
        return f"{table_html}\n\n{text.lstrip()}"
    if position == len(breaks) + 1:
        return f"{text.rstrip()}\n\n{table_html}"
    start, end = breaks[position - 1]
    return f"{text[:start]}\n\n{table_html}\n\n{text[end:]}"


# --- markdown-ish to HTML -----------------------------------------------------

_PLACEHOLDER = "\x02{}\x03"
_PLACEHOLDER_RE = re.compile("\x02(\\d+)\x03")

_BOLD_ITALIC_RE = re.compile(r"\*\*\*(.+?)\*\*\*")
_BOLD_RE = re.compile(r"\*\*(.+?)\*\*")
_ITALIC_RE = re.compile(r"\*(.+?)\*")
_HEADING_RE = re.compile(r"^(#{1,6})\s+(.*)$")
_BULLET_RE = re.compile(r"^[-*]\s+(.*)$")
_ORDERED_RE = re.compile(r"^\d+[.)]\s+(.*)$")


def _inline_markup(escaped: str) -> str:
    escaped = _BOLD_ITALIC_RE.sub(r"<b><i>\1</i></b>", escaped)
    escaped = _BOLD_RE.sub(r"<b>\1</b>", escaped)
    escaped = _ITALIC_RE.sub(r"<i>\1</i>", escaped)
    return escaped


def _blocks_to_html(text: str) -> str:
    out: list[str] = []
    for block in _PARAGRAPH_BREAK_RE.split(text):
        block = block.strip()
        if not block:
            continue
        if _PLACEHOLDER_RE.fullmatch(block):
            # A lone table or display formula is already block-level.
            out.append(block)
            continue
        lines = block.split("\n")
        heading = _HEADING_RE.match(lines[0])
        if heading and len(lines) == 1:
            level = len(heading.group(1))
            out.append(f"<h{level}>{_inline_markup(heading.group(2))}</h{level}>")
            continue
        if all(_BULLET_RE.match(ln) for ln in lines):
            items = "".join(f"<li>{_inline_markup(_BULLET_RE.match(ln).group(1))}</li>" for ln in lines)
            out.append(f"<ul>{items}</ul>")
            continue
        if all(_ORDERED_RE.match(ln) for ln in lines):
            items = "".join(f"<li>{_inline_markup(_ORDERED_RE.match(ln).group(1))}</li>" for ln in lines)
            out.append(f"<ol>{items}</ol>")
            continue
        out.append(f"<p>{_inline_markup(' '.join(lines))}</p>")
    return "\n".join(out)


def _segment_to_html(segment: str) -> str:
    """Convert one column's annotation text to HTML.

    Tables and formulas are shielded behind placeholders so the block
    converter never rewrites their interiors; tables come back verbatim,
    formulas as escaped text with their dollar delimiters intact.
    """
    doc = parse_annotation(segment)
    protected: list[str] = []
    pieces: list[str] = []
    for span in doc.elements:
        if span.kind == ElementKind.PLAIN_TEXT:
            pieces.append(html_escape.escape(span.source))
        elif span.kind == ElementKind.TABLE:
            protected.append(span.source)
            pieces.append(_PLACEHOLDER.format(len(protected) - 1))
        else:
            protected.append(f'<span class="math">{html_escape.escape(span.source)}</span>')
            pieces.append(_PLACEHOLDER.format(len(protected) - 1))
    converted = _blocks_to_html("".join(pieces))
    return _PLACEHOLDER_RE.sub(lambda m: protected[int(m.group(1))], converted)


_PAGE_TEMPLATE = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<style>
  body {{ width: {width}px; margin: 0; padding: 48px 56px; box-sizing: border-box;
         font-family: Georgia, 'Times New Roman', serif; font-size: 17px;
         line-height: 1.45; color: #111; background: #fff; }}
  h1 {{ font-size: 1.6em; }} h2 {{ font-size: 1.3em; }} h3 {{ font-size: 1.15em; }}
  table {{ border-collapse: collapse; margin: 0.6em 0; }}
  td, th {{ border: 1px solid #333; padding: 3px 8px; }}
  .columns {{ display: flex; gap: 28px; align-items: flex-start; }}
  .column {{ flex: 1 1 0; min-width: 0; }}
  .math {{ white-space: pre-wrap; }}
</style>
<script defer src="https://cdn.jsdelivr.net/npm/katex@0.16/dist/katex.min.js"></script>
<script defer src="https://cdn.jsdelivr.net/npm/katex@0.16/dist/contrib/auto-render.min.js"
        onload="renderMathInElement(document.body);"></script>
</head>
<body>
{body}
</body>
</html>
"""


def _split_columns(annotation: str, columns: int) -> list[str]:
    segments = [s.strip() for s in annotation.split(COLUMN_SEPARATOR)]
    segments = [s for s in segments if s]
    if len(segments) < 2:
        raise LayoutError(f"{columns}-column layout needs the '{COLUMN_SEPARATOR}' separator")
    while len(segments) > columns:
        tail = segments.pop()
        segments[-1] = f"{segments[-1]}\n\n{tail}"
    while len(segments) < columns:
        # Split the longest segment at its middle paragraph boundary.
        longest = max(range(len(segments)), key=lambda i: len(segments[i]))
        breaks = _plain_breaks(segments[longest])
        if not breaks:
            raise LayoutError("not enough paragraphs to fill the requested columns")
        mid = breaks[len(breaks) // 2]
        head, tail = segments[longest][: mid[0]].strip(), segments[longest][mid[1] :].strip()
        segments[longest : longest + 1] = [head, tail]
    return segments


def compose_layout(
    annotation: str, columns: int = 1, page_width_px: int = DEFAULT_PAGE_WIDTH_PX
) -> HtmlDocument:
    """Build a fixed-width page; height is left to the content.

    For multi-column layouts the text is split at the generation-time
    separator marker and flowed into explicit column containers, so reading
    the annotation top to bottom matches reading the columns left to right.
    The marker itself never reaches the annotation or the page.
    """
    if columns not in (1, 2, 3):
        raise LayoutError(f"columns must be 1, 2, or 3, got {columns}")
    if columns == 1:
        clean = annotation.strip()
        body = _segment_to_html(clean)
    else:
        segments = _split_columns(annotation, columns)
        clean = "\n\n".join(segments)
        inner = "\n".join(
            f'<div class="column">\n{_segment_to_html(s)}\n</div>' for s in segments
        )
        body = f'<div class="columns">\n{inner}\n</div>'
    page = _PAGE_TEMPLATE.format(width=page_width_px, body=body)
    return HtmlDocument(html=page, annotation=clean, columns=columns)
