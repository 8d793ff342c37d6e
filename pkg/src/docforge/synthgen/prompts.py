"""Prompt construction for the four synthetic document categories.

Each template carries literal TOPIC / SEED / TABLE placeholder tokens that
are replaced at build time; building is byte-deterministic for a given spec.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..docmodel import Category

# The nine document styles the generator asks for.
DEFAULT_STYLES = (
    "Exam paper",
    "slides",
    "academic paper",
    "book",
    "textbook",
    "magazine",
    "notes",
    "newspaper",
    "financial report",
)

# Marker the multi-column prompt asks the model to place between the parts
# that will flow into separate columns.
COLUMN_SEPARATOR = "x----------x"

_MARKDOWN_FEATURES = """\
   - headings of several levels
   - bold, italic, and bold-italic runs
   - underline
   - superscript and subscript
   - unordered and ordered lists"""

_FORMULA_FEATURES = """\
   - matrix-style environments: matrix, array, pmatrix, bmatrix, vmatrix, Vmatrix, Bmatrix, cases, rcases, smallmatrix, subarray, etc.
   - multiline environments: equation with split, align, gather, alignat, etc.
   - ordinary constructs such as frac, sum, etc."""

PLAIN_TEXT_TEMPLATE = """Write a Markdown document about "TOPIC".

Requirements:
1. Aim for roughly 300-500 words.
2. Adopt one of the writing styles listed at the end and keep the whole piece in it.
3. Do not include any tables or mathematical formulas.
4. You may use these Markdown features where they fit:
{markdown}
5. Vary the overall organization; do not always close with a summary.
6. The text may read like an excerpt; it does not have to be complete.
7. Return only the document text, with nothing before or after it.
8. Do not mention which style you picked.
9. Write in English.
10. Random seed is SEED.

Available writing styles:
{styles}
"""

FORMULA_TEMPLATE = """Write a Markdown document about "TOPIC".

Requirements:
1. Aim for roughly 300-400 words.
2. Adopt one of the writing styles listed at the end.
3. Work some LaTeX formulas into the text, drawing on:
{formulas}
4. Inline formulas go between single dollar signs ('$...$'); display formulas go between double dollar signs ('$$...$$'). Use both kinds.
5. Do not include any tables.
6. You may use these Markdown features where they fit:
{markdown}
7. Vary the overall organization; do not always close with a summary.
8. The text may read like an excerpt; it does not have to be complete.
9. Return only the document text, with nothing before or after it.
10. Do not mention the topic choice or style in the text itself.
11. Write in English.
12. Random seed is SEED.

Available writing styles:
{styles}
"""

TABLE_TEMPLATE = """Write a Markdown passage grounded in the HTML table below.

Requirements:
1. Write about 300 words discussing the table's content.
2. Do not reproduce the table itself; it is inserted into the passage separately.
3. You may use these Markdown features where they fit:
{markdown}
4. Vary the overall organization; do not always close with a summary.
5. The text may read like an excerpt; it does not have to be complete.
6. Return only the passage text, with nothing before or after it.
7. Write in English.
8. The random seed is: SEED.

TABLE
"""

MULTI_COLUMN_TEMPLATE = """Write a Markdown document about "TOPIC".

Requirements:
1. Aim for 600-800 words.
2. Adopt one of the writing styles listed at the end.
3. You may insert LaTeX formulas, drawing on:
{formulas}
4. Inline formulas go between single dollar signs ('$...$'); display formulas go between double dollar signs ('$$...$$').
5. You may use these Markdown features where they fit:
{markdown}
6. Vary the overall organization; do not always close with a summary.
7. The text may read like an excerpt; it does not have to be complete.
8. Return only the document text, with nothing before or after it.
9. Do not mention the topic choice or style in the text itself.
10. Write in English.
11. The random seed is: SEED.
12. Divide the text into two parts, separated by a line containing exactly "{separator}".

Available writing styles:
{styles}
"""

_TEMPLATES = {
    Category.PLAIN_ONLY: PLAIN_TEXT_TEMPLATE,
    Category.WITH_FORMULA: FORMULA_TEMPLATE,
    Category.WITH_TABLE: TABLE_TEMPLATE,
    Category.MULTI_COLUMN: MULTI_COLUMN_TEMPLATE,
}


@dataclass(frozen=True)
class GenSpec:
    """One synthetic sample to generate."""

    category: Category
    topic: str
    seed: int
    columns: int = 1
    style_pool: tuple[str, ...] = DEFAULT_STYLES

    def __post_init__(self):
        if self.category == Category.MULTI_COLUMN:
            if self.columns not in (2, 3):
                raise ValueError("MultiColumn specs use 2 or 3 columns")
        elif self.columns != 1:
            raise ValueError(f"{self.category.value} specs are single column")


@dataclass(frozen=True)
class PromptText:
    text: str
    category: Category
    substitutions: dict = field(default_factory=dict)


def build_prompt(spec: GenSpec, table_html: Optional[str] = None) -> PromptText:
    """Instantiate the template for the spec's category.

    WithTable requires the (canonical) table the text should discuss; other
    categories reject one.
    """
    if spec.category == Category.WITH_TABLE:
        if not table_html:
            raise ValueError("WithTable generation requires table_html")
    elif table_html is not None:
        raise ValueError(f"{spec.category.value} does not take a table")
    template = _TEMPLATES.get(spec.category)
    if template is None:
        raise ValueError(f"no prompt template for category {spec.category!r}")

    text = template.format(
        markdown=_MARKDOWN_FEATURES,
        formulas=_FORMULA_FEATURES,
        styles=", ".join(spec.style_pool),
        separator=COLUMN_SEPARATOR,
    )
    substitutions = {"TOPIC": spec.topic, "SEED": str(spec.seed)}
    text = text.replace("TOPIC", spec.topic).replace("SEED", str(spec.seed))
    if spec.category == Category.WITH_TABLE:
        substitutions["TABLE"] = table_html
        text = text.replace("TABLE", table_html)
    for token in ("TOPIC", "SEED", "TABLE"):
        if token in text and token not in spec.topic and token not in (table_html or ""):
            raise AssertionError(f"unreplaced {token} placeholder in prompt")
    return PromptText(text=text, category=spec.category, substitutions=substitutions)
