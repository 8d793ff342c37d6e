"""Text-generation endpoints and the retrying request wrapper.

The wire contract is a single POST: request ``{model, prompt, max_tokens,
temperature}``, response ``{text}``. The credential comes from the
DOCFORGE_API_KEY environment variable. A deterministic local stub stands in
for the remote model in tests and desk runs.
"""

from __future__ import annotations

import os
import random
import time
from dataclasses import dataclass, field
from typing import Protocol

from ..docmodel import Category
from .prompts import COLUMN_SEPARATOR, PromptText

API_KEY_ENV = "DOCFORGE_API_KEY"
DEFAULT_MAX_RESPONSE_BYTES = 1 << 20


class GenerationError(Exception):
    """Generation failed for good; the sample is recorded as a failure."""


class TransientEndpointError(GenerationError):
    """Transport-level failure worth retrying."""


class AuthenticationError(GenerationError):
    """Credential rejected; retrying cannot help."""


class ResponseTooLargeError(GenerationError):
    """The endpoint returned more than the configured size cap."""


class GenerationEndpoint(Protocol):
    def generate(self, prompt: PromptText) -> str: ...


@dataclass
class HttpEndpoint:
    url: str
    model: str
    max_tokens: int = 4096
    temperature: float = 0.8
    timeout_s: float = 120.0
    max_response_bytes: int = DEFAULT_MAX_RESPONSE_BYTES

    def generate(self, prompt: PromptText) -> str:
        import requests  # deferred: keeps stub-only workflows light

        headers = {}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            response = requests.post(
                self.url,
                json={
                    "model": self.model,
                    "prompt": prompt.text,
                    "max_tokens": self.max_tokens,
                    "temperature": self.temperature,
                },
                headers=headers,
                timeout=self.timeout_s,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientEndpointError(str(exc)) from exc
        if response.status_code in (401, 403):
            raise AuthenticationError(f"endpoint rejected credentials ({response.status_code})")
        if response.status_code >= 500:
            raise TransientEndpointError(f"server error {response.status_code}")
        if response.status_code != 200:
            raise GenerationError(f"unexpected status {response.status_code}: {response.text[:200]}")
        if len(response.content) > self.max_response_bytes:
            raise ResponseTooLargeError(f"{len(response.content)} bytes > cap {self.max_response_bytes}")
        try:
            text = response.json()["text"]
        except (ValueError, KeyError) as exc:
            raise GenerationError(f"malformed response body: {exc}") from exc
        if not isinstance(text, str):
            raise GenerationError("response 'text' field is not a string")
        return text


def request_generation(
    endpoint: GenerationEndpoint,
    prompt: PromptText,
    max_retries: int = 3,
    backoff_s: float = 1.0,
) -> str:
    """Call the endpoint, retrying transient failures with exponential backoff.

    Non-transient failures (bad credentials, oversized responses) propagate
    immediately; after ``max_retries`` retries the last transient error
    propagates.
    """
    attempt = 0
    while True:
        try:
            return endpoint.generate(prompt)
        except TransientEndpointError:
            if attempt >= max_retries:
                raise
            if backoff_s > 0:
                time.sleep(backoff_s * (2**attempt))
            attempt += 1


# --- deterministic stub -------------------------------------------------------

_NOUNS = (
    "survey", "method", "record", "cycle", "model", "sample", "region",
    "measure", "process", "figure", "margin", "result", "signal", "archive",
    "station", "pattern", "estimate", "interval", "ledger", "catalog",
)

_VERBS = (
    "shows", "suggests", "records", "tracks", "compares", "outlines",
    "documents", "predicts", "summarizes", "revisits", "questions", "confirms",
)

_MODIFIERS = (
    "seasonal", "annual", "observed", "projected", "regional", "historical",
    "adjusted", "combined", "preliminary", "revised", "independent", "detailed",
)

_INLINE_FORMULAS = (
    r"E = mc^2",
    r"a^2 + b^2 = c^2",
    r"\alpha + \beta",
    r"f(x) = x^2 - 1",
    r"\sum_{i=1}^{n} x_i",
    r"e^{i\pi} + 1 = 0",
    r"\frac{dy}{dx}",
    r"x_{n+1} = x_n / 2",
)

_DISPLAY_FORMULAS = (
    r"\frac{1}{N} \sum_{i=1}^{N} (y_i - \hat{y}_i)^2",
    r"A = \begin{pmatrix} a & b \\ c & d \end{pmatrix}",
    r"f(x) = \begin{cases} x & x \ge 0 \\ -x & x < 0 \end{cases}",
    r"\int_{a}^{b} f(x) \, dx = F(b) - F(a)",
    r"\begin{align} u &= x + y \\ v &= x - y \end{align}",
    r"\lim_{n \to \infty} \left( 1 + \frac{1}{n} \right)^n = e",
    r"\det \begin{vmatrix} p & q \\ r & s \end{vmatrix} = ps - qr",
)


@dataclass
class StubEndpoint:
    """Local text synthesizer: deterministic for a given prompt.

    Produces category-appropriate Markdown (formulas for the formula and
    multi-column categories, the column separator for multi-column) seeded by
    the prompt's SEED substitution so batches are byte-reproducible.
    """

    paragraphs: tuple[int, int] = (3, 5)
    calls: int = field(default=0, init=False)

    def generate(self, prompt: PromptText) -> str:
        self.calls += 1
        seed = int(prompt.substitutions.get("SEED", "0"))
        topic = prompt.substitutions.get("TOPIC", "the subject")
        # String seeding is process-stable; tuple seeding would go through
        # randomized str hashing and break reproducibility across runs.
        rng = random.Random(f"{seed}:{prompt.category.value}")
        if prompt.category == Category.MULTI_COLUMN:
            first = self._body(rng, topic, with_formulas=True)
            second = self._body(rng, topic, with_formulas=True)
            return f"{first}\n\n{COLUMN_SEPARATOR}\n\n{second}"
        with_formulas = prompt.category == Category.WITH_FORMULA
        return self._body(rng, topic, with_formulas=with_formulas)

    def _sentence(self, rng: random.Random, topic: str) -> str:
        return (
            f"The {rng.choice(_MODIFIERS)} {rng.choice(_NOUNS)} of {topic} "
            f"{rng.choice(_VERBS)} a {rng.choice(_MODIFIERS)} {rng.choice(_NOUNS)}."
        )

    def _paragraph(self, rng: random.Random, topic: str) -> str:
        return " ".join(self._sentence(rng, topic) for _ in range(rng.randint(2, 4)))

    def _body(self, rng: random.Random, topic: str, with_formulas: bool) -> str:
        blocks = [f"# {topic.title()}"]
        for _ in range(rng.randint(*self.paragraphs)):
            roll = rng.random()
            if roll < 0.2:
                blocks.append(f"## The {rng.choice(_MODIFIERS)} {rng.choice(_NOUNS)}")
            elif roll < 0.35:
                items = [f"- {self._sentence(rng, topic)}" for _ in range(rng.randint(2, 4))]
                blocks.append("\n".join(items))
            else:
                paragraph = self._paragraph(rng, topic)
                if with_formulas and rng.random() < 0.6:
                    paragraph += f" Here ${rng.choice(_INLINE_FORMULAS)}$ applies."
                blocks.append(paragraph)
            if with_formulas and rng.random() < 0.35:
                blocks.append(f"$$\n{rng.choice(_DISPLAY_FORMULAS)}\n$$")
        if with_formulas and not any(b.startswith("$$") for b in blocks):
            blocks.append(f"$$\n{rng.choice(_DISPLAY_FORMULAS)}\n$$")
        return "\n\n".join(blocks)


@dataclass
class FlakyEndpoint:
    """Test helper: fail transiently ``failures`` times, then delegate."""

    inner: GenerationEndpoint
    failures: int
    attempts: int = field(default=0, init=False)

    def generate(self, prompt: PromptText) -> str:
        self.attempts += 1
        if self.attempts <= self.failures:
            raise TransientEndpointError(f"synthetic transport failure {self.attempts}")
        return self.inner.generate(prompt)
