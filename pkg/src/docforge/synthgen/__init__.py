"""Synthetic document generation: prompts, endpoints, layout, rendering."""

from .endpoint import (
    AuthenticationError,
    FlakyEndpoint,
    GenerationEndpoint,
    GenerationError,
    HttpEndpoint,
    ResponseTooLargeError,
    StubEndpoint,
    TransientEndpointError,
    request_generation,
)
from .generate import (
    GENERATED_CATEGORIES,
    BatchReport,
    GenerationRun,
    build_specs,
    load_table_pool,
    load_topics,
)
from .layout import (
    DEFAULT_PAGE_WIDTH_PX,
    HtmlDocument,
    LayoutError,
    compose_layout,
    inject_table,
)
from .prompts import COLUMN_SEPARATOR, DEFAULT_STYLES, GenSpec, PromptText, build_prompt
from .render import RenderedSample, RendererCommand, RenderError, render_document

__all__ = [
    "AuthenticationError",
    "BatchReport",
    "COLUMN_SEPARATOR",
    "DEFAULT_PAGE_WIDTH_PX",
    "DEFAULT_STYLES",
    "FlakyEndpoint",
    "GENERATED_CATEGORIES",
    "GenSpec",
    "GenerationEndpoint",
    "GenerationError",
    "GenerationRun",
    "HtmlDocument",
    "HttpEndpoint",
    "LayoutError",
    "PromptText",
    "RenderError",
    "RenderedSample",
    "RendererCommand",
    "ResponseTooLargeError",
    "StubEndpoint",
    "TransientEndpointError",
    "build_prompt",
    "build_specs",
    "compose_layout",
    "inject_table",
    "load_table_pool",
    "load_topics",
    "render_document",
    "request_generation",
]
