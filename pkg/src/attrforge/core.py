"""Domain types and the in-line citation grammar.

A response is a sequence of sentence-level statements. Citations are runs of
single-integer markers such as ``[1][3]``; they attach to the statement whose
character span contains them and resolve 1-based into a document set.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

ORIGINS = ("retrieved", "synthesized", "distractor")

MARKER_RE = re.compile(r"\[(\d+)\]")
# adjacent markers may be separated by whitespace: "[1] [2]" is one run
MARKER_RUN_RE = re.compile(r"\[\d+\](?:\s*\[\d+\])*")
# terminal punctuation, then any mix of closing quotes/parens and markers;
# must be followed by whitespace or end of text
_BOUNDARY_RE = re.compile(r"[.!?]+(?:[.!?\"')]|\s*\[\d+\])*(?=\s|$)")
_TRAILING_PUNCT_RE = re.compile(r"[.!?][.!?\"')]*$")
_SPACE_BEFORE_PUNCT_RE = re.compile(r"\s+([.,;:!?])")
_WS_RE = re.compile(r"\s+")

# never a boundary after these, whatever follows
_ABBREVIATIONS = frozenset(
    {"e.g", "i.e", "cf", "vs", "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "fig", "approx"}
)
# boundary only when the next word is capitalised
_SOFT_ABBREVIATIONS = frozenset({"etc", "al", "inc", "ltd", "co"})


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str
    origin: str = "retrieved"
    source_query_id: str | None = None

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.body:
            raise ValueError(f"document {self.doc_id!r} has an empty body")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown document origin {self.origin!r}")

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "body": self.body,
            "origin": self.origin,
            "source_query_id": self.source_query_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        return cls(
            doc_id=str(d["doc_id"]),
            title=d.get("title", ""),
            body=d["body"] if "body" in d else d["text"],
            origin=d.get("origin", "retrieved"),
            source_query_id=d.get("source_query_id"),
        )


class DocumentSet(Sequence[Document]):
    """Ordered documents; citation ``k`` resolves to ``self[k - 1]``."""

    def __init__(self, docs: Iterable[Document] = ()):
        self._docs = tuple(docs)
        seen: set[str] = set()
        for d in self._docs:
            if d.doc_id in seen:
                raise ValueError(f"duplicate doc_id {d.doc_id!r} in document set")
            seen.add(d.doc_id)

    def __getitem__(self, i):  # type: ignore[override]
        if isinstance(i, slice):
            return DocumentSet(self._docs[i])
        return self._docs[i]

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, DocumentSet):
            return self._docs == other._docs
        return NotImplemented

    def __repr__(self) -> str:
        return f"DocumentSet({[d.doc_id for d in self._docs]})"

    def resolves(self, k: int) -> bool:
        return 1 <= k <= len(self._docs)

    def cite(self, k: int) -> Document:
        if not self.resolves(k):
            raise IndexError(f"citation [{k}] does not resolve in a set of {len(self)} documents")
        return self._docs[k - 1]

    def ids(self) -> list[str]:
        return [d.doc_id for d in self._docs]

    def index_of(self, doc_id: str) -> int:
        """1-based citation index of ``doc_id``."""
        for i, d in enumerate(self._docs, start=1):
            if d.doc_id == doc_id:
                return i
        raise KeyError(doc_id)


@dataclass(frozen=True)
class Statement:
    text: str
    citations: tuple[int, ...] = ()
    invalid_citations: tuple[int, ...] = ()
    char_span: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "citations", tuple(sorted(set(self.citations))))
        object.__setattr__(self, "invalid_citations", tuple(sorted(set(self.invalid_citations))))
        if set(self.citations) & set(self.invalid_citations):
            raise ValueError("a citation cannot be both valid and invalid")

    def structure(self) -> tuple:
        return (self.text, self.citations, self.invalid_citations)


@dataclass(frozen=True)
class AttributedResponse:
    raw_text: str
    statements: tuple[Statement, ...] = field(default_factory=tuple)

    def structure(self) -> list[tuple]:
        """Span-free view used for structural equality."""
        return [s.structure() for s in self.statements]

    def to_dict(self) -> dict:
        return {
            "raw_text": self.raw_text,
            "statements": [
                {
                    "text": s.text,
                    "citations": list(s.citations),
                    "invalid_citations": list(s.invalid_citations),
                    "char_span": list(s.char_span),
                }
                for s in self.statements
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttributedResponse":
        return cls(
            raw_text=d["raw_text"],
            statements=tuple(
                Statement(
                    text=s["text"],
                    citations=tuple(s["citations"]),
                    invalid_citations=tuple(s.get("invalid_citations", ())),
                    char_span=tuple(s.get("char_span", (0, 0))),
                )
                for s in d["statements"]
            ),
        )


_PADDED_RUN_RE = re.compile(r"\s*" + MARKER_RUN_RE.pattern)


def _marker_gap(m: re.Match) -> str:
    # inside a punctuation cluster ('end. [1]"') a space would create a boundary
    s, a, b = m.string, m.start(), m.end()
    if a > 0 and s[a - 1] in ".!?\"')" and b < len(s) and not s[b].isspace():
        return ""
    return " "


def _clean_text(s: str) -> str:
    # markers can nest ("[1[2]]"); strip to a fixpoint so no marker survives
    prev = None
    while prev != s:
        prev = s
        s = _PADDED_RUN_RE.sub(_marker_gap, s)
    s = _WS_RE.sub(" ", s).strip()
    return _SPACE_BEFORE_PUNCT_RE.sub(r"\1", s)


def strip_citations(raw: str) -> str:
    """Remove every citation marker run and collapse whitespace."""
    return _clean_text(raw)


def _word_before(raw: str, pos: int) -> str:
    i = pos
    while i > 0 and not raw[i - 1].isspace():
        i -= 1
    return raw[i:pos].lower().lstrip("(\"'")


def _next_word_capitalised(raw: str, pos: int) -> bool:
    m = re.compile(r"\s*(\S)").match(raw, pos)
    return bool(m) and m.group(1).isupper()


def _is_boundary(raw: str, m: re.Match) -> bool:
    if m.end() >= len(raw.rstrip()):
        return True
    if re.sub(r"[^.!?]", "", m.group()) != ".":
        return True
    word = _word_before(raw, m.start())
    if word in _ABBREVIATIONS:
        return False
    if word in _SOFT_ABBREVIATIONS:
        return _next_word_capitalised(raw, m.end())
    return True


def segment(raw: str) -> list[tuple[int, int]]:
    """Sentence spans over ``raw``; each starts and ends on non-whitespace."""
    spans = []
    start = 0
    for m in _BOUNDARY_RE.finditer(raw):
        if not _is_boundary(raw, m):
            continue
        spans.append((start, m.end()))
        start = m.end()
    spans.append((start, len(raw)))

    out = []
    for a, b in spans:
        while a < b and raw[a].isspace():
            a += 1
        while b > a and raw[b - 1].isspace():
            b -= 1
        if a < b:
            out.append((a, b))
    return out


def parse_response(raw: str, doc_count: int) -> AttributedResponse:
    """Split ``raw`` into statements and resolve their citation markers.

    Parsing is total. Markers outside ``[1, doc_count]`` are kept on the
    statement as ``invalid_citations``; malformed markers stay literal text.
    """
    if doc_count < 0:
        raise ValueError("doc_count must be >= 0")
    statements = []
    for a, b in segment(raw):
        chunk = raw[a:b]
        ks = {int(k) for k in MARKER_RE.findall("".join(MARKER_RUN_RE.findall(chunk)))}
        valid = tuple(k for k in ks if 1 <= k <= doc_count)
        invalid = tuple(k for k in ks if not 1 <= k <= doc_count)
        statements.append(
            Statement(text=_clean_text(chunk), citations=valid, invalid_citations=invalid, char_span=(a, b))
        )
    return AttributedResponse(raw_text=raw, statements=tuple(statements))


def markers(ks: Iterable[int]) -> str:
    return "".join(f"[{k}]" for k in sorted(set(ks)))


def render_statement(text: str, citations: Iterable[int]) -> str:
    """``("Paris is the capital", [3, 1])`` -> ``"Paris is the capital [1][3]."``"""
    marks = markers(citations)
    text = text.strip()
    m = _TRAILING_PUNCT_RE.search(text)
    if m:
        head, tail = text[: m.start()].rstrip(), m.group(0)
    else:
        head, tail = text, "" if not text else "."
    if not marks:
        return head + tail
    # a bare-punctuation statement keeps its markers after the punctuation, so
    # they cannot be read as trailing the previous statement
    return f"{head} {marks}{tail}" if head else f"{tail}{marks}"


def render_response(resp: AttributedResponse) -> str:
    """Render statements with markers placed just before terminal punctuation."""
    parts = []
    for i, s in enumerate(resp.statements):
        ks = set(s.citations) | set(s.invalid_citations)
        text = s.text
        last = i == len(resp.statements) - 1
        if last and not _TRAILING_PUNCT_RE.search(text):
            # keep an unterminated final statement unterminated
            parts.append(f"{text} {markers(ks)}".strip() if ks else text)
        else:
            parts.append(render_statement(text, ks))
    return " ".join(p for p in parts if p)


def build_response(statements: Iterable[tuple[str, Iterable[int]]], doc_count: int) -> AttributedResponse:
    """Render ``(text, citations)`` pairs and parse them back into a response."""
    pairs = list(statements)
    raw = " ".join(render_statement(t, ks) for t, ks in pairs)
    return parse_response(raw, doc_count)


def format_document(k: int, doc: Document) -> str:
    return f"Document [{k}](Title: {doc.title}): {doc.body}"


def format_documents(docs: Iterable[Document]) -> str:
    return "\n".join(format_document(k, d) for k, d in enumerate(docs, start=1))


def concat_documents(docs: Iterable[Document]) -> str:
    """Premise text for entailment over several documents."""
    return "\n\n".join(f"Title: {d.title}\n{d.body}" for d in docs)
