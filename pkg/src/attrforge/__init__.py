"""Self-taught attribution pipeline.

Synthesize attributed training data by reverse attribution, score sampled
responses with fine-grained rewards, build rejection-sampling and preference
datasets, and evaluate citation quality. Every model call goes through
:mod:`attrforge.gateway`, so the whole loop runs against mocks.
"""

from .core import (
    AttributedResponse,
    Document,
    DocumentSet,
    Statement,
    parse_response,
    render_response,
    strip_citations,
)

__version__ = "0.1.0"

__all__ = [
    "AttributedResponse",
    "Document",
    "DocumentSet",
    "Statement",
    "parse_response",
    "render_response",
    "strip_citations",
]
