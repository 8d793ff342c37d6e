"""Filter cascade, iteration bookkeeping, balancing, and dataset versioning.

A filter pass applies the aspect-ratio gate (when image geometry is known)
and then the configured per-sample filters in order, short-circuiting at the
first discard. Every input sample gets exactly one decision; retained order
is input order; parallel execution yields the same report as serial.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .docmodel import (
    AnnotationDoc,
    Category,
    CorpusSchemaError,
    Provenance,
    SampleRecord,
    parse_annotation,
    record_from_json,
    write_corpus,
)
from .mathcheck import EnvironmentInventory, formula_filter
from .tablecheck import table_filter
from .textfilter import (
    DEFAULT_F1_THRESHOLD,
    FilterDecision,
    FilterScores,
    Reason,
    Verdict,
    discard,
    f1,
    normalize_tokens,
    plain_text_of,
    retain,
    table_cell_text,
    text_filter,
)

DEFAULT_ASPECT_RANGE = (0.4, 2.5)


class FilterStage(str, Enum):
    TEXT = "Text"
    TABLE = "Table"
    FORMULA = "Formula"


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    f1_threshold: float = DEFAULT_F1_THRESHOLD
    aspect_lo: float = DEFAULT_ASPECT_RANGE[0]
    aspect_hi: float = DEFAULT_ASPECT_RANGE[1]
    aspect_orientation: str = "height/width"  # or "width/height"
    apply_aspect_filter: bool = True
    filter_order: tuple[FilterStage, ...] = (FilterStage.TEXT, FilterStage.TABLE, FilterStage.FORMULA)
    sampling_ratios: dict = field(default_factory=lambda: {"plain": 1.0, "table": 1.0, "formula": 1.0})
    include_table_text: bool = False
    env_inventory_path: Optional[str] = None
    predictions_path: Optional[str] = None
    references_path: Optional[str] = None
    output_path: Optional[str] = None
    parallelism: int = 1

    def validate(self) -> None:
        if not 0 < self.f1_threshold <= 1:
            raise ConfigError(f"f1_threshold must be in (0, 1], got {self.f1_threshold}")
        if not (0 < self.aspect_lo < self.aspect_hi):
            raise ConfigError(f"aspect range must satisfy 0 < lo < hi, got ({self.aspect_lo}, {self.aspect_hi})")
        if self.aspect_orientation not in ("height/width", "width/height"):
            raise ConfigError(f"unknown aspect orientation {self.aspect_orientation!r}")
        if len(set(self.filter_order)) != len(self.filter_order):
            raise ConfigError("filter_order has duplicates")
        for key, ratio in self.sampling_ratios.items():
            if key not in ("plain", "table", "formula"):
                raise ConfigError(f"unknown sampling category {key!r}")
            if ratio <= 0:
                raise ConfigError(f"sampling ratio for {key} must be positive, got {ratio}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")

    def to_json(self) -> dict:
        return {
            "f1_threshold": self.f1_threshold,
            "aspect_lo": self.aspect_lo,
            "aspect_hi": self.aspect_hi,
            "aspect_orientation": self.aspect_orientation,
            "apply_aspect_filter": self.apply_aspect_filter,
            "filter_order": [s.value for s in self.filter_order],
            "sampling_ratios": dict(sorted(self.sampling_ratios.items())),
            "include_table_text": self.include_table_text,
            "env_inventory_path": self.env_inventory_path,
            "parallelism": self.parallelism,
        }

    @classmethod
    def from_file(cls, path: Path | str) -> "PipelineConfig":
        try:
            obj = json.loads(Path(path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(obj)

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        config = cls()
        known = set(config.__dataclass_fields__)
        for key, value in obj.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key == "filter_order":
                try:
                    value = tuple(FilterStage(v) for v in value)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from exc
            setattr(config, key, value)
        config.validate()
        return config

    def inventory(self) -> EnvironmentInventory:
        if self.env_inventory_path:
            return EnvironmentInventory.from_file(self.env_inventory_path)
        return EnvironmentInventory.default()


def aspect_ratio_filter(
    width_px: int,
    height_px: int,
    aspect_range: tuple[float, float] = DEFAULT_ASPECT_RANGE,
    orientation: str = "height/width",
    sample_id: str = "",
) -> FilterDecision:
    """Retain iff the aspect ratio lies strictly inside the open interval."""
    if width_px <= 0 or height_px <= 0:
        raise ValueError(f"dimensions must be positive, got {width_px}x{height_px}")
    lo, hi = aspect_range
    ratio = height_px / width_px if orientation == "height/width" else width_px / height_px
    if lo < ratio < hi:
        return retain(sample_id)
    return discard(sample_id, Reason.ASPECT_RATIO)


# --- content classification ---------------------------------------------------


def content_flags(doc: AnnotationDoc) -> tuple[bool, bool]:
    return doc.has_table, doc.has_formula


def balance_class(record: SampleRecord) -> str:
    """Sampling-ratio class. Rare table+formula samples follow the table ratio."""
    has_table, has_formula = content_flags(record.annotation)
    if has_table:
        return "table"
    if has_formula:
        return "formula"
    return "plain"


def category_tallies(records: Iterable[SampleRecord]) -> dict:
    """PlainOnly / HasTable / HasFormula counts; a sample holding both a table
    and a formula lands in both element tallies, PlainOnly stays exclusive."""
    tallies = {"PlainOnly": 0, "HasTable": 0, "HasFormula": 0}
    for record in records:
        has_table, has_formula = content_flags(record.annotation)
        if has_table:
            tallies["HasTable"] += 1
        if has_formula:
            tallies["HasFormula"] += 1
        if not has_table and not has_formula:
            tallies["PlainOnly"] += 1
    return tallies


# --- filter pass ---------------------------------------------------------------


@dataclass
class FilterReport:
    decisions: list[FilterDecision]
    input_count: int
    retained_ids: list[str]
    discard_breakdown: Counter
    retained_by_category: dict
    prefilter_f1s: dict
    errors: list = field(default_factory=list)

    @property
    def retained_total(self) -> int:
        return len(self.retained_ids)

    @property
    def mean_f1_prefilter(self) -> Optional[float]:
        if not self.prefilter_f1s:
            return None
        return sum(self.prefilter_f1s.values()) / len(self.prefilter_f1s)

    def to_json(self) -> dict:
        return {
            "aggregate": {
                "input_count": self.input_count,
                "retained_total": self.retained_total,
                "discard_breakdown": {k.value: v for k, v in sorted(self.discard_breakdown.items())},
                "retained_by_category": self.retained_by_category,
                "mean_f1_prefilter": self.mean_f1_prefilter,
                "error_count": len(self.errors),
            },
            "retained_ids": list(self.retained_ids),
            "prefilter_f1s": self.prefilter_f1s,
            "errors": list(self.errors),
            "decisions": [
                {
                    "sample_id": d.sample_id,
                    "verdict": d.verdict.value,
                    "reason": d.reason.value,
                    "f1": d.scores.f1 if d.scores else None,
                    "element_index": d.element_index,
                }
                for d in self.decisions
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FilterReport":
        decisions = []
        for d in obj.get("decisions", []):
            scores = None
            if d.get("f1") is not None:
                scores = FilterScores(precision=float("nan"), recall=float("nan"), f1=d["f1"])
            decisions.append(
                FilterDecision(
                    sample_id=d["sample_id"],
                    verdict=Verdict(d["verdict"]),
                    reason=Reason(d["reason"]),
                    scores=scores,
                    element_index=d.get("element_index"),
                )
            )
        aggregate = obj.get("aggregate", {})
        return cls(
            decisions=decisions,
            input_count=aggregate.get("input_count", len(decisions)),
            retained_ids=list(obj.get("retained_ids", [])),
            discard_breakdown=Counter({Reason(k): v for k, v in aggregate.get("discard_breakdown", {}).items()}),
            retained_by_category=aggregate.get("retained_by_category", {}),
            prefilter_f1s=obj.get("prefilter_f1s", {}),
            errors=list(obj.get("errors", [])),
        )


def _prefilter_f1(sample: SampleRecord, reference: Optional[str], config: PipelineConfig) -> Optional[float]:
    if reference is None:
        return None
    ref = normalize_tokens(reference)
    if sum(ref.values()) == 0:
        return None
    text = plain_text_of(sample.annotation)
    if config.include_table_text:
        text = text + " " + table_cell_text(sample.annotation)
    return f1(normalize_tokens(text), ref).f1


def _decide(
    sample: SampleRecord,
    reference: Optional[str],
    config: PipelineConfig,
    inventory: EnvironmentInventory,
) -> FilterDecision:
    if (
        config.apply_aspect_filter
        and sample.width_px is not None
        and sample.height_px is not None
    ):
        decision = aspect_ratio_filter(
            sample.width_px,
            sample.height_px,
            (config.aspect_lo, config.aspect_hi),
            config.aspect_orientation,
            sample.sample_id,
        )
        if not decision.retained:
            return decision
    text_scores = None
    for stage in config.filter_order:
        if stage == FilterStage.TEXT:
            if reference is None:
                return discard(sample.sample_id, Reason.EMPTY_REFERENCE)
            decision = text_filter(
                sample,
                reference,
                threshold=config.f1_threshold,
                include_table_text=config.include_table_text,
            )
            text_scores = decision.scores
        elif stage == FilterStage.TABLE:
            decision = table_filter(sample)
        else:
            decision = formula_filter(sample, inventory)
        if not decision.retained:
            return decision
    return retain(sample.sample_id, text_scores)


def run_filter_pass(
    samples: list[SampleRecord],
    references: dict,
    config: PipelineConfig,
) -> tuple[list[SampleRecord], FilterReport]:
    """Apply the cascade; return retained samples (input order) and the report."""
    config.validate()
    inventory = config.inventory()

    def work(sample: SampleRecord):
        reference = references.get(sample.sample_id)
        try:
            decision = _decide(sample, reference, config, inventory)
            score = _prefilter_f1(sample, reference, config)
            return decision, score, None
        except Exception as exc:  # surfaced as a partial failure, never a crash
            return None, None, f"{sample.sample_id}: {exc}"

    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(work, samples))
    else:
        results = [work(sample) for sample in samples]

    decisions: list[FilterDecision] = []
    retained_records: list[SampleRecord] = []
    breakdown: Counter = Counter()
    prefilter: dict = {}
    errors: list[str] = []
    for sample, (decision, score, error) in zip(samples, results):
        if error is not None:
            errors.append(error)
            continue
        decisions.append(decision)
        if score is not None:
            prefilter[sample.sample_id] = score
        if decision.retained:
            retained_records.append(sample)
        else:
            breakdown[decision.reason] += 1
    report = FilterReport(
        decisions=decisions,
        input_count=len(samples),
        retained_ids=[r.sample_id for r in retained_records],
        discard_breakdown=breakdown,
        retained_by_category=category_tallies(retained_records),
        prefilter_f1s=prefilter,
        errors=errors,
    )
    return retained_records, report


# --- iteration statistics -------------------------------------------------------


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    input_count: int
    retained_total: int
    retained_by_category: dict
    mean_f1_prefilter: Optional[float]
    retained_ratio_vs_previous: Optional[float]
    discard_breakdown: dict

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "input_count": self.input_count,
            "retained_total": self.retained_total,
            "retained_by_category": self.retained_by_category,
            "mean_f1_prefilter": self.mean_f1_prefilter,
            "retained_ratio_vs_previous": self.retained_ratio_vs_previous,
            "discard_breakdown": self.discard_breakdown,
        }


def iteration_stats(
    current: FilterReport,
    previous_retained_ids: Optional[set] = None,
    prefilter_f1s: Optional[list] = None,
    iteration: int = 0,
) -> IterationStats:
    """Summarize one self-improvement round.

    The retained ratio is the fraction of the previous round's retained
    samples that survived this round; undefined (None) on the first round.
    """
    if prefilter_f1s is not None:
        mean_f1 = sum(prefilter_f1s) / len(prefilter_f1s) if prefilter_f1s else None
    else:
        mean_f1 = current.mean_f1_prefilter
    ratio: Optional[float] = None
    if previous_retained_ids:
        kept = len(set(current.retained_ids) & set(previous_retained_ids))
        ratio = kept / len(previous_retained_ids)
    return IterationStats(
        iteration=iteration,
        input_count=current.input_count,
        retained_total=current.retained_total,
        retained_by_category=dict(current.retained_by_category),
        mean_f1_prefilter=mean_f1,
        retained_ratio_vs_previous=ratio,
        discard_breakdown={k.value: v for k, v in sorted(current.discard_breakdown.items())},
    )


# --- category balancing ----------------------------------------------------------


def sample_balance(records: list[SampleRecord], ratios: dict, seed: int) -> list[SampleRecord]:
    """Down-/up-sample records by content class.

    Ratio r <= 1 keeps each sample with probability r; r > 1 duplicates it
    floor(r) times plus once more with probability frac(r). Duplicates get a
    ``~n`` suffix on their sample_id so manifests stay uniquely keyed. All
    ratios at 1.0 is the identity.
    """
    for key, ratio in ratios.items():
        if ratio <= 0:
            raise ValueError(f"ratio for {key!r} must be positive, got {ratio}")
    rng = random.Random(f"balance:{seed}")
    out: list[SampleRecord] = []
    for record in records:
        ratio = ratios.get(balance_class(record), 1.0)
        if ratio == 1.0:
            out.append(record)
            continue
        if ratio < 1.0:
            if rng.random() < ratio:
                out.append(record)
            continue
        copies = int(ratio)
        if rng.random() < ratio - copies:
            copies += 1
        for n in range(copies):
            if n == 0:
                out.append(record)
            else:
                out.append(replace(record, sample_id=f"{record.sample_id}~{n + 1}"))
    return out


# --- dataset versioning -----------------------------------------------------------


@dataclass(frozen=True)
class DatasetVersion:
    iteration: int
    manifest_path: Path
    parent: Optional[int]
    content_digest: str


def dataset_digest(sample_ids: Iterable[str], config: PipelineConfig) -> str:
    payload = json.dumps(
        {"sample_ids": sorted(sample_ids), "config": config.to_json()},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def commit_dataset(
    retained: list[SampleRecord],
    config: PipelineConfig,
    out_dir: Path | str,
    iteration: int = 0,
    parent: Optional[DatasetVersion] = None,
) -> DatasetVersion:
    """Write the training manifest and its version stamp.

    The digest covers the sorted retained ids plus the effective config, so
    re-running identical inputs reproduces it exactly.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / f"manifest_iter{iteration:03d}.jsonl"
    try:
        write_corpus(retained, manifest_path)
    except OSError as exc:
        raise OSError(f"cannot write manifest {manifest_path}: {exc}") from exc
    digest = dataset_digest((r.sample_id for r in retained), config)
    version = DatasetVersion(
        iteration=iteration,
        manifest_path=manifest_path,
        parent=parent.iteration if parent else None,
        content_digest=digest,
    )
    version_path = out_dir / f"version_iter{iteration:03d}.json"
    version_path.write_text(
        json.dumps(
            {
                "iteration": version.iteration,
                "manifest_path": manifest_path.name,
                "parent": version.parent,
                "content_digest": version.content_digest,
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    return version


# --- prediction ingestion -----------------------------------------------------------


def load_predictions(path: Path | str) -> list[SampleRecord]:
    """Load model outputs for filtering.

    Accepts full sample records or minimal ``{sample_id, prediction_text}``
    lines from an external inference system; minimal records carry no image
    geometry, so the aspect-ratio gate skips them.
    """
    records: list[SampleRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusSchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "prediction_text" in obj and "annotation" not in obj:
                record = SampleRecord(
                    sample_id=str(obj["sample_id"]),
                    image_ref=str(obj.get("image_ref", "")),
                    width_px=int(obj["width_px"]) if obj.get("width_px") else None,
                    height_px=int(obj["height_px"]) if obj.get("height_px") else None,
                    annotation=parse_annotation(str(obj["prediction_text"])),
                    category=Category.REAL_WORLD,
                    iteration=int(obj.get("iteration", 0)),
                    provenance=Provenance.MODEL_PREDICTION,
                )
                record.validate()
            else:
                record = record_from_json(obj)
            if record.sample_id in seen:
                raise CorpusSchemaError(f"{path}:{lineno}: duplicate sample_id {record.sample_id}")
            seen.add(record.sample_id)
            records.append(record)
    return records
