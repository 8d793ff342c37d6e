"""Unified annotation format: element spans and corpus records.

An annotation is a Markdown string in which tables appear as attribute-light
HTML (``<table>...</table>``), inline formulas as ``$...$`` and display
formulas as ``$$...$$``. Everything else is plain text. This module lexes an
annotation into ordered, contiguous element spans; all downstream filters
consume the spans, never the raw string.

The lexer is total: malformed or unterminated delimiters degrade to plain
text instead of raising. Structural problems are detected later by the
validators, which is where bad samples get rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional


class ElementKind(str, Enum):
    PLAIN_TEXT = "PlainText"
    TABLE = "Table"
    INLINE_FORMULA = "InlineFormula"
    DISPLAY_FORMULA = "DisplayFormula"


class Category(str, Enum):
    PLAIN_ONLY = "PlainOnly"
    WITH_FORMULA = "WithFormula"
    WITH_TABLE = "WithTable"
    MULTI_COLUMN = "MultiColumn"
    REAL_WORLD = "RealWorld"


class Provenance(str, Enum):
    SYNTHETIC = "Synthetic"
    MODEL_PREDICTION = "ModelPrediction"


@dataclass(frozen=True)
class ElementSpan:
    """One contiguous slice of an annotation, classified by kind.

    ``start``/``end`` are half-open offsets into the source string. Slices of
    consecutive spans are contiguous and concatenate back to the source.
    """

    kind: ElementKind
    start: int
    end: int
    source: str


@dataclass(frozen=True)
class AnnotationDoc:
    source_text: str
    elements: tuple[ElementSpan, ...]

    def spans_of(self, kind: ElementKind) -> list[ElementSpan]:
        return [s for s in self.elements if s.kind == kind]

    @property
    def has_table(self) -> bool:
        return any(s.kind == ElementKind.TABLE for s in self.elements)

    @property
    def has_formula(self) -> bool:
        return any(
            s.kind in (ElementKind.INLINE_FORMULA, ElementKind.DISPLAY_FORMULA)
            for s in self.elements
        )


class CorpusSchemaError(ValueError):
    """A corpus line violates the record schema."""


@dataclass
class SampleRecord:
    """One image/annotation pair in a corpus manifest.

    ``width_px``/``height_px`` may be None for externally supplied prediction
    records that carry no image geometry; when present they must be positive.
    """

    sample_id: str
    image_ref: str
    width_px: Optional[int]
    height_px: Optional[int]
    annotation: AnnotationDoc
    category: Category
    iteration: int = 0
    provenance: Provenance = Provenance.MODEL_PREDICTION

    def validate(self) -> None:
        if not self.sample_id:
            raise CorpusSchemaError("sample_id must be non-empty")
        for name, value in (("width_px", self.width_px), ("height_px", self.height_px)):
            if value is not None and value <= 0:
                raise CorpusSchemaError(f"{name} must be positive, got {value}")
        if self.iteration < 0:
            raise CorpusSchemaError(f"iteration must be >= 0, got {self.iteration}")


TABLE_OPEN = "<table"
TABLE_CLOSE = "</table>"


def _is_escaped(text: str, i: int) -> bool:
    # A character is escaped iff preceded by an odd run of backslashes.
    backslashes = 0
    j = i - 1
    while j >= 0 and text[j] == "\\":
        backslashes += 1
        j -= 1
    return backslashes % 2 == 1


def _table_opens_at(text: str, i: int) -> bool:
    if not text.startswith(TABLE_OPEN, i):
        return False
    j = i + len(TABLE_OPEN)
    # Require '>' or whitespace next so '<tablex>' is not a table tag.
    return j < len(text) and (text[j] == ">" or text[j].isspace())


def _find_table_end(text: str, start: int) -> Optional[int]:
    """Offset just past the ``</table>`` matching the open tag at ``start``.

    Nested open tags are counted so an inner table belongs to the outer span.
    Returns None when the table never closes.
    """
    depth = 1
    i = start + len(TABLE_OPEN)
    n = len(text)
    while i < n:
        if text.startswith(TABLE_CLOSE, i):
            depth -= 1
            i += len(TABLE_CLOSE)
            if depth == 0:
                return i
        elif _table_opens_at(text, i):
            depth += 1
            i += len(TABLE_OPEN)
        else:
            i += 1
    return None


def _scan_formula_close(text: str, start: int, display: bool) -> Optional[int]:
    """Find the offset of the closing delimiter for a formula opened at ``start``.

    Returns the index of the first closing ``$`` (the first of the two for
    display mode), or None when the span cannot close: end of text, a newline
    (inline mode only), a table open tag (tables win over formula delimiters),
    or -- for display mode -- a lone ``$`` where ``$$`` is required. The lone-
    dollar rule keeps extracted sources free of unescaped dollars.
    """
    i = start + (2 if display else 1)
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n" and not display:
            return None
        if ch == "<" and _table_opens_at(text, i):
            return None
        if ch == "$" and not _is_escaped(text, i):
            if not display:
                return i
            if i + 1 < n and text[i + 1] == "$":
                return i
            return None
        i += 1
    return None


def parse_annotation(text: str) -> AnnotationDoc:
    """Lex an annotation into table, formula and plain-text spans.

    Total over all inputs: whatever cannot be lexed as a table or formula is
    plain text. Dollar signs inside table spans are inert.
    """
    spans: list[ElementSpan] = []
    n = len(text)
    plain_start = 0
    i = 0

    def flush_plain(upto: int) -> None:
        if upto > plain_start:
            spans.append(
                ElementSpan(ElementKind.PLAIN_TEXT, plain_start, upto, text[plain_start:upto])
            )

    while i < n:
        ch = text[i]
        if ch == "<" and _table_opens_at(text, i):
            end = _find_table_end(text, i)
            if end is not None:
                flush_plain(i)
                spans.append(ElementSpan(ElementKind.TABLE, i, end, text[i:end]))
                i = end
                plain_start = end
                continue
            i += 1
        elif ch == "$" and not _is_escaped(text, i):
            display = i + 1 < n and text[i + 1] == "$"
            close = _scan_formula_close(text, i, display)
            if close is not None:
                kind = ElementKind.DISPLAY_FORMULA if display else ElementKind.INLINE_FORMULA
                end = close + (2 if display else 1)
                flush_plain(i)
                spans.append(ElementSpan(kind, i, end, text[i:end]))
                i = end
                plain_start = end
                continue
            # Unmatched delimiter: the dollar(s) stay plain text.
            i += 2 if display else 1
        else:
            i += 1

    flush_plain(n)
    return AnnotationDoc(source_text=text, elements=tuple(spans))


def serialize_annotation(doc: AnnotationDoc) -> str:
    """Inverse of :func:`parse_annotation`; returns the source verbatim."""
    return doc.source_text


def plain_text_of(doc: AnnotationDoc) -> str:
    """Plain-text spans in order, joined by single spaces.

    The space keeps adjacent tokens from fusing when a formula or table sits
    between them ("x$y$z" must not become "xz"). Token-level consumers
    normalize whitespace afterwards, so the extra separator is harmless.
    """
    return " ".join(s.source for s in doc.elements if s.kind == ElementKind.PLAIN_TEXT)


def strip_formula_delimiters(span: ElementSpan) -> str:
    """Formula source with its dollar delimiters removed."""
    if span.kind == ElementKind.INLINE_FORMULA:
        return span.source[1:-1]
    if span.kind == ElementKind.DISPLAY_FORMULA:
        return span.source[2:-2]
    raise ValueError(f"not a formula span: {span.kind}")


# --- corpus JSONL -----------------------------------------------------------

_RECORD_FIELDS = (
    "sample_id",
    "image_ref",
    "width_px",
    "height_px",
    "annotation",
    "category",
    "iteration",
    "provenance",
)


def record_to_json(record: SampleRecord) -> dict:
    return {
        "sample_id": record.sample_id,
        "image_ref": record.image_ref,
        "width_px": record.width_px,
        "height_px": record.height_px,
        "annotation": record.annotation.source_text,
        "category": record.category.value,
        "iteration": record.iteration,
        "provenance": record.provenance.value,
    }


def record_from_json(obj: dict) -> SampleRecord:
    try:
        record = SampleRecord(
            sample_id=str(obj["sample_id"]),
            image_ref=str(obj.get("image_ref", "")),
            width_px=int(obj["width_px"]) if obj.get("width_px") is not None else None,
            height_px=int(obj["height_px"]) if obj.get("height_px") is not None else None,
            annotation=parse_annotation(str(obj["annotation"])),
            category=Category(obj.get("category", Category.REAL_WORLD.value)),
            iteration=int(obj.get("iteration", 0)),
            provenance=Provenance(obj.get("provenance", Provenance.MODEL_PREDICTION.value)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusSchemaError(f"bad sample record: {exc}") from exc
    record.validate()
    return record


def write_corpus(records: Iterable[SampleRecord], path: Path | str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record), ensure_ascii=False) + "\n")
            count += 1
    return count


def iter_corpus(path: Path | str) -> Iterator[SampleRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusSchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            yield record_from_json(obj)


def load_corpus(path: Path | str) -> list[SampleRecord]:
    """Load a corpus file, enforcing sample_id uniqueness."""
    records = list(iter_corpus(path))
    seen: set[str] = set()
    for record in records:
        if record.sample_id in seen:
            raise CorpusSchemaError(f"duplicate sample_id: {record.sample_id}")
        seen.add(record.sample_id)
    return records
