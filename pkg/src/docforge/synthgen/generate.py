"""Batch generation: specs -> prompts -> text -> layout -> rendered samples.

Every requested spec is accounted for: a sample either lands in the corpus
manifest or appears in the batch report's failure list with the stage that
rejected it. Generated text is checked with the same table and formula
validators used for model-output filtering before any rendering happens;
plain-text F1 filtering does not apply here because the generated annotation
is ground truth by construction.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from ..docmodel import Category, Provenance, SampleRecord, parse_annotation, write_corpus
from ..mathcheck import EnvironmentInventory, extract_formulas, formula_valid
from ..tablecheck import canonicalize_table, check_table, extract_tables
from .endpoint import GenerationEndpoint, GenerationError, request_generation
from .layout import DEFAULT_PAGE_WIDTH_PX, LayoutError, compose_layout, inject_table
from .prompts import GenSpec, build_prompt
from .render import RendererCommand, RenderError, render_document

GENERATED_CATEGORIES = (
    Category.PLAIN_ONLY,
    Category.WITH_FORMULA,
    Category.WITH_TABLE,
    Category.MULTI_COLUMN,
)

_CATEGORY_SLUG = {
    Category.PLAIN_ONLY: "plain",
    Category.WITH_FORMULA: "formula",
    Category.WITH_TABLE: "table",
    Category.MULTI_COLUMN: "multicolumn",
}

# Small built-in pool so table generation works out of the box; real runs
# supply richer tables (e.g. harvested from an external corpus) via a file.
DEFAULT_TABLE_POOL = (
    '<table><tr><td>Quarter</td><td>Revenue</td><td>Margin</td></tr>'
    '<tr><td>Q1</td><td>4.1</td><td>12%</td></tr>'
    '<tr><td>Q2</td><td>4.6</td><td>14%</td></tr></table>',
    '<table><thead><tr><th>Station</th><th colspan="2">Rainfall</th></tr></thead>'
    '<tbody><tr><td>North</td><td>112</td><td>118</td></tr>'
    '<tr><td>South</td><td>96</td><td>101</td></tr></tbody></table>',
    '<table><tr><td rowspan="2">Group</td><td>Before</td><td>After</td></tr>'
    '<tr><td>17.2</td><td>19.8</td></tr>'
    '<tr><td>Control</td><td>16.9</td><td>17.1</td></tr></table>',
    '<table><tr><th>Species</th><th>Count</th></tr>'
    '<tr><td>Alder</td><td>214</td></tr><tr><td>Birch</td><td>167</td></tr>'
    '<tr><td>Rowan</td><td>89</td></tr></table>',
)


def load_topics(path: Optional[Path | str] = None) -> list[str]:
    if path is None:
        text = resources.files("docforge.synthgen").joinpath("topics.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    topics = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if not topics:
        raise ValueError("topic list is empty")
    return topics


def load_table_pool(path: Optional[Path | str] = None) -> list[str]:
    """Canonical, structurally valid tables, one per line of the pool file."""
    if path is None:
        raw = list(DEFAULT_TABLE_POOL)
    else:
        raw = [line.strip() for line in Path(path).read_text("utf-8").splitlines() if line.strip()]
    pool = []
    for i, table in enumerate(raw):
        canonical = canonicalize_table(table)
        verdict = check_table(canonical)
        if not verdict.valid:
            raise ValueError(f"table pool entry {i} is structurally invalid: {verdict.defects[0]}")
        pool.append(canonical)
    if not pool:
        raise ValueError("table pool is empty")
    return pool


@dataclass(frozen=True)
class GenFailure:
    sample_id: str
    category: str
    stage: str  # generate | inject | validate | layout | render
    error: str


@dataclass
class BatchReport:
    requested: dict = field(default_factory=dict)
    written: int = 0
    failures: list[GenFailure] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "requested": self.requested,
            "written": self.written,
            "failures": [
                {"sample_id": f.sample_id, "category": f.category, "stage": f.stage, "error": f.error}
                for f in self.failures
            ],
        }


def build_specs(
    categories: list[Category],
    count_per_category: int,
    base_seed: int,
    topics: list[str],
    columns: Optional[int] = None,
) -> list[GenSpec]:
    """Exactly ``count_per_category`` specs per category, deterministically."""
    specs: list[GenSpec] = []
    for category in categories:
        for i in range(count_per_category):
            rng = random.Random(f"spec:{base_seed}:{category.value}:{i}")
            topic = rng.choice(topics)
            if category == Category.MULTI_COLUMN:
                cols = columns if columns in (2, 3) else rng.choice((2, 3))
            else:
                cols = 1
            specs.append(GenSpec(category=category, topic=topic, seed=base_seed + i, columns=cols))
    return specs


def _sample_id(spec: GenSpec) -> str:
    return f"{_CATEGORY_SLUG[spec.category]}-{spec.seed:08d}"


def _validate_annotation(annotation: str, inventory: EnvironmentInventory) -> Optional[str]:
    """First structural problem in the would-be ground truth, or None."""
    doc = parse_annotation(annotation)
    for index, table in enumerate(extract_tables(doc)):
        verdict = check_table(table)
        if not verdict.valid:
            return f"table {index}: {verdict.defects[0].kind.value}"
    for index, formula in enumerate(extract_formulas(doc)):
        verdict = formula_valid(formula.source, formula.mode, inventory)
        if not verdict.valid:
            return f"formula {index}: {verdict.defects[0].kind.value}"
    return None


@dataclass
class GenerationRun:
    endpoint: GenerationEndpoint
    renderer: RendererCommand
    out_dir: Path
    topics: list[str] = field(default_factory=load_topics)
    table_pool: list[str] = field(default_factory=load_table_pool)
    inventory: EnvironmentInventory = field(default_factory=EnvironmentInventory.default)
    page_width_px: int = DEFAULT_PAGE_WIDTH_PX
    parallelism: int = 1
    max_retries: int = 3
    backoff_s: float = 1.0

    def run(self, specs: list[GenSpec]) -> BatchReport:
        out_dir = Path(self.out_dir)
        images_dir = out_dir / "images"
        images_dir.mkdir(parents=True, exist_ok=True)
        report = BatchReport()
        for spec in specs:
            slug = _CATEGORY_SLUG[spec.category]
            report.requested[slug] = report.requested.get(slug, 0) + 1

        if self.parallelism > 1:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                outcomes = list(pool.map(self._one, specs))
        else:
            outcomes = [self._one(spec) for spec in specs]

        # Single writer keeps the corpus file and provenance log append-consistent.
        records: list[SampleRecord] = []
        provenance: list[dict] = []
        for outcome in outcomes:
            if isinstance(outcome, GenFailure):
                report.failures.append(outcome)
            else:
                record, prov = outcome
                records.append(record)
                provenance.append(prov)
        report.written = write_corpus(records, out_dir / "corpus.jsonl")
        with open(out_dir / "provenance.jsonl", "w", encoding="utf-8") as fh:
            for entry in provenance:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2)
        return report

    def _one(self, spec: GenSpec):
        sample_id = _sample_id(spec)
        slug = _CATEGORY_SLUG[spec.category]
        table_html = None
        if spec.category == Category.WITH_TABLE:
            table_html = random.Random(f"pool:{spec.seed}").choice(self.table_pool)
        prompt = build_prompt(spec, table_html)
        try:
            text = request_generation(self.endpoint, prompt, self.max_retries, self.backoff_s)
        except GenerationError as exc:
            return GenFailure(sample_id, slug, "generate", str(exc))

        if table_html is not None:
            text = inject_table(text, table_html, seed=spec.seed)

        try:
            page = compose_layout(text, spec.columns, self.page_width_px)
        except LayoutError as exc:
            return GenFailure(sample_id, slug, "layout", str(exc))

        problem = _validate_annotation(page.annotation, self.inventory)
        if problem is not None:
            return GenFailure(sample_id, slug, "validate", problem)

        image_path = Path(self.out_dir) / "images" / f"{sample_id}.png"
        try:
            rendered = render_document(page, self.renderer, image_path)
        except RenderError as exc:
            return GenFailure(sample_id, slug, "render", str(exc))

        record = SampleRecord(
            sample_id=sample_id,
            image_ref=str(Path("images") / f"{sample_id}.png"),
            width_px=rendered.width_px,
            height_px=rendered.height_px,
            annotation=parse_annotation(rendered.annotation),
            category=spec.category,
            iteration=0,
            provenance=Provenance.SYNTHETIC,
        )
        prov = {
            "sample_id": sample_id,
            "category": spec.category.value,
            "topic": spec.topic,
            "seed": spec.seed,
            "columns": spec.columns,
            "prompt": prompt.text,
            "response": text,
        }
        return record, prov
