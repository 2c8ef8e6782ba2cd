"""Prompt templates with bracketed placeholders.

Templates are plain text files. Placeholders (``[Question]``, ``[Response]``,
``[Claim]``, ``[Documents]``) are substituted in a single pass, so values that
happen to contain placeholder text are inserted verbatim.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from typing import Iterable

from .core import Document, format_documents

PLACEHOLDERS = ("Question", "Response", "Claim", "Documents")
TEMPLATE_NAMES = (
    "response_generation",
    "claim_decomposition",
    "document_generation",
    "attribution_longform",
    "attribution_yesno",
)

_PLACEHOLDER_RE = re.compile(r"\[(%s)\]" % "|".join(PLACEHOLDERS))


def load_template(name: str, template_dir: str | Path | None = None) -> str:
    if template_dir is not None:
        path = Path(template_dir) / f"{name}.txt"
        if path.exists():
            return path.read_text(encoding="utf-8")
    return resources.files("attrforge").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")


def fill(template: str, **values: str) -> str:
    def sub(m: re.Match) -> str:
        key = m.group(1)
        return values[key] if key in values else m.group(0)

    return _PLACEHOLDER_RE.sub(sub, template).rstrip("\n")


class PromptBook:
    """The five templates, loaded once from a directory or the packaged defaults."""

    def __init__(self, template_dir: str | Path | None = None):
        self.template_dir = template_dir
        self.templates = {n: load_template(n, template_dir) for n in TEMPLATE_NAMES}

    def response_generation(self, question: str) -> str:
        return fill(self.templates["response_generation"], Question=question)

    def claim_decomposition(self, response: str) -> str:
        return fill(self.templates["claim_decomposition"], Response=response)

    def document_generation(self, claims: Iterable[str]) -> str:
        return fill(self.templates["document_generation"], Claim="\n".join(claims))

    def attribution(self, question: str, docs: Iterable[Document], style: str = "longform") -> str:
        name = "attribution_yesno" if style == "yesno" else "attribution_longform"
        return fill(self.templates[name], Question=question, Documents=format_documents(docs))

    def context(self, question: str, docs: Iterable[Document]) -> str:
        """Conditioning prefix ``q ⊕ D`` used for sequence log-probabilities."""
        return self.attribution(question, docs)
