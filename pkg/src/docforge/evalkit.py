"""Normalized-edit-distance evaluation over annotation corpora.

Reports four columns per sample: plain text, tables, formulas, and the raw
annotation overall. Tables are compared after canonicalization so whitespace
and attribute noise never contribute; formulas are compared with their dollar
delimiters stripped, with inline/display mode mismatches tallied separately.
Lower is better everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .docmodel import AnnotationDoc, parse_annotation, plain_text_of
from .mathcheck import extract_formulas
from .tablecheck import MalformedMarkupError, canonicalize_table, extract_tables


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance over Unicode scalar values."""
    if a == b:
        return 0
    # Trim the common prefix/suffix; they contribute nothing.
    start = 0
    while start < len(a) and start < len(b) and a[start] == b[start]:
        start += 1
    end_a, end_b = len(a), len(b)
    while end_a > start and end_b > start and a[end_a - 1] == b[end_b - 1]:
        end_a -= 1
        end_b -= 1
    a, b = a[start:end_a], b[start:end_b]
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
        previous = current
    return previous[-1]


def normalized_edit_distance(a: str, b: str) -> float:
    """Edit distance divided by the longer length; 0 when both strings are empty."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return edit_distance(a, b) / longest


@dataclass(frozen=True)
class EvalPair:
    sample_id: str
    prediction: AnnotationDoc
    target: AnnotationDoc


@dataclass(frozen=True)
class SampleEval:
    sample_id: str
    text_ned: Optional[float]
    table_ned: Optional[float]
    formula_ned: Optional[float]
    overall_ned: float
    formula_mode_mismatches: int = 0


@dataclass(frozen=True)
class EvalReport:
    per_sample: tuple[SampleEval, ...]
    means: dict
    skipped: dict
    mode_mismatches: int

    def to_json(self) -> dict:
        return {
            "pair_count": len(self.per_sample),
            "means": self.means,
            "skipped": self.skipped,
            "formula_mode_mismatches": self.mode_mismatches,
            "per_sample": [
                {
                    "sample_id": s.sample_id,
                    "text_ned": s.text_ned,
                    "table_ned": s.table_ned,
                    "formula_ned": s.formula_ned,
                    "overall_ned": s.overall_ned,
                }
                for s in self.per_sample
            ],
        }


def _canonical_or_raw(table_html: str) -> str:
    try:
        return canonicalize_table(table_html)
    except MalformedMarkupError:
        return table_html


def _paired_ned(pred_items: list[str], target_items: list[str]) -> Optional[float]:
    """Mean NED over items paired by position; the shorter list pads with ''."""
    if not pred_items and not target_items:
        return None
    count = max(len(pred_items), len(target_items))
    total = 0.0
    for i in range(count):
        a = pred_items[i] if i < len(pred_items) else ""
        b = target_items[i] if i < len(target_items) else ""
        total += normalized_edit_distance(a, b)
    return total / count


def evaluate_pair(pair: EvalPair) -> SampleEval:
    pred_text = plain_text_of(pair.prediction)
    target_text = plain_text_of(pair.target)
    text_ned: Optional[float]
    if not pred_text.strip() and not target_text.strip():
        text_ned = None
    else:
        text_ned = normalized_edit_distance(pred_text, target_text)

    table_ned = _paired_ned(
        [_canonical_or_raw(t) for t in extract_tables(pair.prediction)],
        [_canonical_or_raw(t) for t in extract_tables(pair.target)],
    )

    pred_formulas = extract_formulas(pair.prediction)
    target_formulas = extract_formulas(pair.target)
    formula_ned = _paired_ned(
        [f.source for f in pred_formulas],
        [f.source for f in target_formulas],
    )
    mismatches = sum(
        1
        for p, t in zip(pred_formulas, target_formulas)
        if p.mode != t.mode
    )

    overall = normalized_edit_distance(pair.prediction.source_text, pair.target.source_text)
    return SampleEval(
        sample_id=pair.sample_id,
        text_ned=text_ned,
        table_ned=table_ned,
        formula_ned=formula_ned,
        overall_ned=overall,
        formula_mode_mismatches=mismatches,
    )


def evaluate_corpus(pairs: list[EvalPair]) -> EvalReport:
    per_sample = tuple(evaluate_pair(p) for p in pairs)
    means: dict = {}
    skipped: dict = {}
    for column in ("text_ned", "table_ned", "formula_ned", "overall_ned"):
        values = [getattr(s, column) for s in per_sample]
        present = [v for v in values if v is not None]
        skipped[column] = len(values) - len(present)
        means[column] = sum(present) / len(present) if present else None
    return EvalReport(
        per_sample=per_sample,
        means=means,
        skipped=skipped,
        mode_mismatches=sum(s.formula_mode_mismatches for s in per_sample),
    )


# --- corpus pairing ----------------------------------------------------------


def load_eval_corpus(path: Path | str) -> dict[str, AnnotationDoc]:
    """Load ``sample_id -> annotation`` from JSONL.

    Accepts full sample records ("annotation") as well as bare prediction
    dumps ("prediction_text" or "text").
    """
    docs: dict[str, AnnotationDoc] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            text = obj.get("annotation", obj.get("prediction_text", obj.get("text")))
            if text is None or "sample_id" not in obj:
                raise ValueError(f"{path}:{lineno}: need sample_id and an annotation field")
            docs[str(obj["sample_id"])] = parse_annotation(str(text))
    return docs


def pair_corpora(
    predictions: dict[str, AnnotationDoc], targets: dict[str, AnnotationDoc]
) -> list[EvalPair]:
    missing = sorted(set(targets) - set(predictions))
    extra = sorted(set(predictions) - set(targets))
    if missing or extra:
        raise ValueError(
            f"corpora do not match: {len(missing)} target ids without predictions "
            f"{missing[:5]}, {len(extra)} prediction ids without targets {extra[:5]}"
        )
    return [EvalPair(sid, predictions[sid], targets[sid]) for sid in sorted(targets)]
