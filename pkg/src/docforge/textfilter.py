"""Plain-text quality filter: token multisets, precision/recall/F1, thresholding.

Prediction text and OCR reference text are both normalized the same way:
every non-alphanumeric character becomes a space, the result is lowercased
and split on whitespace, and occurrences of each unit are counted. The filter
then compares the two count maps and discards samples whose F1 falls below a
threshold (0.90 by default).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .docmodel import AnnotationDoc, ElementKind, SampleRecord, plain_text_of

DEFAULT_F1_THRESHOLD = 0.90

TokenMultiset = Counter
"""Map from normalized unit to its occurrence count (all counts >= 1)."""


class Verdict(str, Enum):
    RETAIN = "Retain"
    DISCARD = "Discard"


class Reason(str, Enum):
    NONE = "None"
    LOW_F1 = "LowF1"
    INVALID_TABLE = "InvalidTable"
    INVALID_FORMULA = "InvalidFormula"
    ASPECT_RATIO = "AspectRatio"
    EMPTY_REFERENCE = "EmptyReference"


@dataclass(frozen=True)
class FilterScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class FilterDecision:
    sample_id: str
    verdict: Verdict
    reason: Reason = Reason.NONE
    scores: Optional[FilterScores] = None
    element_index: Optional[int] = None

    @property
    def retained(self) -> bool:
        return self.verdict == Verdict.RETAIN


def retain(sample_id: str, scores: Optional[FilterScores] = None) -> FilterDecision:
    return FilterDecision(sample_id, Verdict.RETAIN, Reason.NONE, scores)


def discard(
    sample_id: str,
    reason: Reason,
    scores: Optional[FilterScores] = None,
    element_index: Optional[int] = None,
) -> FilterDecision:
    return FilterDecision(sample_id, Verdict.DISCARD, reason, scores, element_index)


class EmptyPredictionError(ValueError):
    """Precision is undefined: the prediction multiset is empty."""


class EmptyReferenceError(ValueError):
    """Recall is undefined: the reference multiset is empty."""


def normalize_tokens(text: str, ascii_only: bool = False, lowercase: bool = True) -> TokenMultiset:
    """Normalize text into a unit -> count map.

    Non-alphanumeric characters become spaces, the text is case-folded, and
    units are the whitespace-separated pieces. The alphanumeric class is
    Unicode letters and digits by default; ``ascii_only`` restricts it to
    [a-zA-Z0-9] for pipelines that want byte-identical behavior across
    engines with poor Unicode support.
    """
    if lowercase:
        text = text.lower()
    if ascii_only:
        chars = [ch if ("a" <= ch <= "z" or "A" <= ch <= "Z" or "0" <= ch <= "9") else " " for ch in text]
    else:
        chars = [ch if ch.isalnum() else " " for ch in text]
    return Counter("".join(chars).split())


def _overlap(pred: TokenMultiset, ref: TokenMultiset) -> int:
    # Sum of min counts over the union of units; absent units count 0.
    return sum(min(count, ref.get(unit, 0)) for unit, count in pred.items())


def precision(pred: TokenMultiset, ref: TokenMultiset) -> float:
    total = sum(pred.values())
    if total == 0:
        raise EmptyPredictionError("prediction multiset is empty")
    return _overlap(pred, ref) / total


def recall(pred: TokenMultiset, ref: TokenMultiset) -> float:
    total = sum(ref.values())
    if total == 0:
        raise EmptyReferenceError("reference multiset is empty")
    return _overlap(pred, ref) / total


def f1(pred: TokenMultiset, ref: TokenMultiset) -> FilterScores:
    """Precision, recall and their harmonic mean.

    The reference must be non-empty. An empty prediction is allowed and
    scores zero: it predicts nothing, so precision is taken as 0 rather than
    raising, keeping the score triple total for the filter.
    """
    r = recall(pred, ref)
    p = 0.0 if sum(pred.values()) == 0 else precision(pred, ref)
    denom = p + r
    score = 0.0 if denom == 0 else 2.0 * p * r / denom
    return FilterScores(precision=p, recall=r, f1=score)


def table_cell_text(doc: AnnotationDoc) -> str:
    """Tag-stripped text of all table cells, for the optional inclusive mode."""
    import re

    parts = []
    for span in doc.elements:
        if span.kind == ElementKind.TABLE:
            parts.append(re.sub(r"<[^>]*>", " ", span.source))
    return " ".join(parts)


def text_filter(
    sample: SampleRecord,
    reference_text: str,
    threshold: float = DEFAULT_F1_THRESHOLD,
    include_table_text: bool = False,
    ascii_only: bool = False,
    lowercase: bool = True,
) -> FilterDecision:
    """Retain a sample iff its plain-text F1 against the reference is >= threshold.

    By default only the prediction's plain-text spans are compared against
    the full OCR reference; ``include_table_text`` additionally counts table
    cell text on the prediction side. An empty normalized reference is an
    unverifiable page and yields Discard(EmptyReference).
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    ref = normalize_tokens(reference_text, ascii_only=ascii_only, lowercase=lowercase)
    if sum(ref.values()) == 0:
        return discard(sample.sample_id, Reason.EMPTY_REFERENCE)
    text = plain_text_of(sample.annotation)
    if include_table_text:
        text = text + " " + table_cell_text(sample.annotation)
    pred = normalize_tokens(text, ascii_only=ascii_only, lowercase=lowercase)
    scores = f1(pred, ref)
    if scores.f1 >= threshold:
        return retain(sample.sample_id, scores)
    return discard(sample.sample_id, Reason.LOW_F1, scores)


# --- reference JSONL --------------------------------------------------------


def load_references(path: Path | str) -> dict[str, str]:
    """Load a reference file of ``{sample_id, reference_text}`` JSON lines."""
    refs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                refs[str(obj["sample_id"])] = str(obj["reference_text"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad reference record: {exc}") from exc
    return refs


def write_references(records: Iterable[tuple[str, str]], path: Path | str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, reference_text in records:
            fh.write(json.dumps({"sample_id": sample_id, "reference_text": reference_text}, ensure_ascii=False) + "\n")
            count += 1
    return count
