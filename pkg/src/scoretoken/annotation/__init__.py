"""Prompt rendering, remote dispatch and judge tallies."""

from __future__ import annotations

from .client import (
    AnnotationRequest,
    AnnotationResponse,
    DispatchResult,
    HttpTransport,
    MockTransport,
    dispatch,
    dispatch_many,
    parse_integer_score,
    transport_for_endpoint,
)
from .judge import AVERAGE_ROW, format_tally, match_candidate, tally_judgements
from .prompts import (
    TEMPLATE_IDS,
    AttributeCatalog,
    PromptInstance,
    PromptTemplate,
    attribute_catalog,
    get_template,
    render,
    render_attribute_prompt,
    render_instance,
)

__all__ = [
    "AVERAGE_ROW",
    "AnnotationRequest",
    "AnnotationResponse",
    "AttributeCatalog",
    "DispatchResult",
    "HttpTransport",
    "MockTransport",
    "PromptInstance",
    "PromptTemplate",
    "TEMPLATE_IDS",
    "attribute_catalog",
    "dispatch",
    "dispatch_many",
    "format_tally",
    "get_template",
    "match_candidate",
    "parse_integer_score",
    "render",
    "render_attribute_prompt",
    "render_instance",
    "tally_judgements",
    "transport_for_endpoint",
]
