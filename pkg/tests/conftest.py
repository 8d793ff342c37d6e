import random

import pytest

from docforge.docmodel import Category, Provenance, SampleRecord, parse_annotation

WORDS = (
    "ridge", "basin", "survey", "ledger", "harbor", "granite", "meadow",
    "signal", "archive", "census", "orchard", "lattice", "quarry", "estuary",
)

VALID_TABLE = (
    '<table><tr><td rowspan="2">A</td><td>B</td></tr><tr><td>C</td></tr></table>'
)
RAGGED_TABLE = "<table><tr><td>A</td><td>B</td></tr><tr><td>C</td></tr></table>"
VALID_FORMULA = r"$\frac{a}{b}$"
BROKEN_FORMULA = r"$\frac{a}{b$"


def make_record(
    sample_id: str,
    annotation: str,
    width: int = 1000,
    height: int = 1414,
    category: Category = Category.REAL_WORLD,
) -> SampleRecord:
    return SampleRecord(
        sample_id=sample_id,
        image_ref=f"images/{sample_id}.png",
        width_px=width,
        height_px=height,
        annotation=parse_annotation(annotation),
        category=category,
        iteration=0,
        provenance=Provenance.MODEL_PREDICTION,
    )


def make_fixture_corpus(n: int = 200, seed: int = 13):
    """Deterministic corpus with references that spread F1 over [0, 1] and
    sprinkle in structural table/formula defects."""
    rng = random.Random(f"fixture:{seed}")
    samples = []
    references = {}
    for i in range(n):
        sample_id = f"s{i:04d}"
        words = [rng.choice(WORDS) for _ in range(rng.randint(6, 14))]
        reference = " ".join(words)
        # Corrupt a prediction-side fraction of tokens to spread F1 scores.
        corrupt = rng.randint(0, len(words))
        predicted = [w if k >= corrupt else f"junk{k}" for k, w in enumerate(words)]
        annotation = " ".join(predicted)
        roll = rng.random()
        if roll < 0.15:
            annotation += f"\n\n{RAGGED_TABLE}"
        elif roll < 0.30:
            annotation += f"\n\n{VALID_TABLE}"
        if 0.30 <= roll < 0.40:
            annotation += f"\n\nwhere {BROKEN_FORMULA} holds"
        elif 0.40 <= roll < 0.55:
            annotation += f"\n\nwhere {VALID_FORMULA} holds"
        samples.append(make_record(sample_id, annotation))
        references[sample_id] = reference
    return samples, references


@pytest.fixture(scope="session")
def fixture_corpus():
    return make_fixture_corpus(200)
