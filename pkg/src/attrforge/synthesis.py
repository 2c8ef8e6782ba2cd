"""Reverse-attribution data synthesis.

Starting from a query, the model answers closed-book, the answer is broken
into claims, claims are grouped, one document is written per group, and the
answer is relabelled with citations by tracing each statement's claims to the
documents that contain them. Distractor documents from other queries are then
mixed in. Because provenance is tracked explicitly, gold citations are
correct by construction.
"""

from __future__ import annotations

import hashlib
import math
import random
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .core import AttributedResponse, Document, DocumentSet, build_response, render_response, segment
from .gateway import GenerationRequest, Generator
from .prompts import PromptBook
from .text import content_words

MAX_STATEMENTS = 5


class SynthesisError(Exception):
    pass


class EmptyGeneration(SynthesisError):
    pass


class DecompositionEmpty(SynthesisError):
    pass


class PoolTooSmall(SynthesisError):
    pass


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 1.0
    top_p: float = 0.95
    max_tokens: int = 512


@dataclass(frozen=True)
class Claim:
    claim_id: str
    text: str
    parent_statement_idx: int  # 1-based index into the closed-book statements


@dataclass(frozen=True)
class ClaimSet:
    set_id: str
    claim_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.claim_ids:
            raise ValueError("a claim set needs at least one claim")


@dataclass
class SyntheticExample:
    query_id: str
    query: str
    closed_book: str
    documents: DocumentSet
    gold_response: AttributedResponse
    claims: list[Claim]
    claim_sets: list[ClaimSet]
    doc_for_set: dict[str, str]
    relevant_doc_ids: frozenset[str]
    flags: list[str] = field(default_factory=list)

    @property
    def flag_free(self) -> bool:
        return not self.flags

    def claims_for_doc(self, doc_id: str) -> list[Claim]:
        by_id = {c.claim_id: c for c in self.claims}
        for cs in self.claim_sets:
            if self.doc_for_set[cs.set_id] == doc_id:
                return [by_id[c] for c in cs.claim_ids]
        return []

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "query": self.query,
            "closed_book": self.closed_book,
            "documents": [d.to_dict() for d in self.documents],
            "gold_response": self.gold_response.to_dict(),
            "claims": [
                {"claim_id": c.claim_id, "text": c.text, "parent_statement_idx": c.parent_statement_idx}
                for c in self.claims
            ],
            "claim_sets": [{"set_id": s.set_id, "claim_ids": list(s.claim_ids)} for s in self.claim_sets],
            "doc_for_set": dict(self.doc_for_set),
            "relevant_doc_ids": sorted(self.relevant_doc_ids),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticExample":
        return cls(
            query_id=d["query_id"],
            query=d["query"],
            closed_book=d["closed_book"],
            documents=DocumentSet(Document.from_dict(x) for x in d["documents"]),
            gold_response=AttributedResponse.from_dict(d["gold_response"]),
            claims=[Claim(c["claim_id"], c["text"], int(c["parent_statement_idx"])) for c in d["claims"]],
            claim_sets=[ClaimSet(s["set_id"], tuple(s["claim_ids"])) for s in d["claim_sets"]],
            doc_for_set=dict(d["doc_for_set"]),
            relevant_doc_ids=frozenset(d["relevant_doc_ids"]),
            flags=list(d.get("flags", [])),
        )


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    h = hashlib.sha256("\x1f".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") >> 1


def _generate_one(generator: Generator, prompt: str, sampling: SamplingConfig, seed: int | None) -> str:
    req = GenerationRequest(
        prompt=prompt,
        n_samples=1,
        temperature=sampling.temperature,
        top_p=sampling.top_p,
        max_tokens=sampling.max_tokens,
        seed=seed,
    )
    return generator.generate(req)[0]


def statements_of(text: str) -> list[str]:
    return [text[a:b] for a, b in segment(text)]


def truncate_statements(text: str, limit: int = MAX_STATEMENTS) -> str:
    spans = segment(text)
    if len(spans) <= limit:
        return text.strip()
    return text[spans[0][0] : spans[limit - 1][1]]


def generate_closed_book_response(
    query: str,
    generator: Generator,
    prompts: PromptBook | None = None,
    sampling: SamplingConfig = SamplingConfig(),
    seed: int | None = None,
) -> str:
    """Answer ``query`` from parametric knowledge only, capped at five statements."""
    prompts = prompts or PromptBook()
    text = _generate_one(generator, prompts.response_generation(query), sampling, seed)
    if not text.strip():
        raise EmptyGeneration(f"blank closed-book response for {query!r}")
    return truncate_statements(text)


_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)]|\(\d+\))\s*")
_PROVENANCE_RE = re.compile(r"^\[S(\d+)\]\s*")


def parse_claim_lines(text: str) -> list[tuple[str, int | None]]:
    """One claim per non-blank line; bullets and numbering are dropped.

    A leading ``[S<k>]`` tag is read as explicit provenance (1-based
    statement index) and removed from the claim text.
    """
    out = []
    for line in text.splitlines():
        line = _BULLET_RE.sub("", line).strip()
        parent = None
        m = _PROVENANCE_RE.match(line)
        if m:
            parent = int(m.group(1))
            line = line[m.end() :].strip()
        if line:
            out.append((line, parent))
    return out


def align_claim(claim_text: str, statements: Sequence[str]) -> int:
    """1-based index of the statement sharing the most content words; ties go earliest."""
    words = set(content_words(claim_text))
    best, best_overlap = 1, -1
    for i, s in enumerate(statements, start=1):
        overlap = len(words & set(content_words(s)))
        if overlap > best_overlap:
            best, best_overlap = i, overlap
    return best


def decompose_claims(
    response: str,
    generator: Generator,
    prompts: PromptBook | None = None,
    sampling: SamplingConfig = SamplingConfig(),
    seed: int | None = None,
    id_prefix: str = "c",
) -> list[Claim]:
    if not response.strip():
        raise ValueError("response must be non-empty")
    prompts = prompts or PromptBook()
    raw = _generate_one(generator, prompts.claim_decomposition(response), sampling, seed)
    lines = parse_claim_lines(raw)
    if not lines:
        raise DecompositionEmpty("decomposition produced no claims")
    statements = statements_of(response)
    claims = []
    for i, (text, parent) in enumerate(lines, start=1):
        if parent is None or not 1 <= parent <= len(statements):
            parent = align_claim(text, statements)
        claims.append(Claim(claim_id=f"{id_prefix}{i}", text=text, parent_statement_idx=parent))
    return claims


def combine_claims(
    claims: Sequence[Claim],
    group_size_range: tuple[int, int] = (2, 3),
    rng_seed: int = 0,
    id_prefix: str = "s",
) -> list[ClaimSet]:
    """Seeded random partition of ``claims`` into groups sized within the range.

    The last group takes whatever is left and may be smaller than ``min``.
    """
    lo, hi = group_size_range
    if not claims:
        raise ValueError("claims must be non-empty")
    if not 1 <= lo <= hi:
        raise ValueError(f"invalid group size range {group_size_range}")
    rng = random.Random(rng_seed)
    ids = [c.claim_id for c in claims]
    rng.shuffle(ids)
    sets = []
    while ids:
        size = rng.randint(lo, hi)
        group, ids = ids[:size], ids[size:]
        sets.append(ClaimSet(set_id=f"{id_prefix}{len(sets) + 1}", claim_ids=tuple(group)))
    return sets


def split_title_body(text: str) -> tuple[str, str, bool]:
    """First line is the title, the rest the body. Single-line text is degenerate."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise EmptyGeneration("blank document generation")
    title = re.sub(r"^(?:title\s*:\s*|#+\s*)", "", lines[0], flags=re.I).strip() or lines[0]
    if len(lines) == 1:
        return title, title, True
    return title, " ".join(lines[1:]), False


def generate_document(
    claim_set: ClaimSet,
    claims_by_id: Mapping[str, Claim],
    generator: Generator,
    prompts: PromptBook | None = None,
    sampling: SamplingConfig = SamplingConfig(),
    seed: int | None = None,
    doc_id: str | None = None,
    query_id: str | None = None,
    flags: list[str] | None = None,
) -> Document:
    prompts = prompts or PromptBook()
    prompt = prompts.document_generation(claims_by_id[c].text for c in claim_set.claim_ids)
    title, body, degenerate = split_title_body(_generate_one(generator, prompt, sampling, seed))
    doc_id = doc_id or claim_set.set_id
    if degenerate and flags is not None:
        flags.append(f"degenerate_document:{doc_id}")
    return Document(doc_id=doc_id, title=title, body=body, origin="synthesized", source_query_id=query_id)


def relabel_citations(
    closed_book: str,
    claims: Iterable[Claim],
    claim_sets: Iterable[ClaimSet],
    doc_for_set: Mapping[str, str],
    documents: DocumentSet,
    flags: list[str] | None = None,
) -> AttributedResponse:
    """Cite, on each closed-book statement, every document holding one of its claims."""
    statements = statements_of(closed_book)
    parent = {c.claim_id: c.parent_statement_idx for c in claims}
    cites: dict[int, set[int]] = {i: set() for i in range(1, len(statements) + 1)}
    for cs in claim_sets:
        k = documents.index_of(doc_for_set[cs.set_id])
        for cid in cs.claim_ids:
            cites.setdefault(parent[cid], set()).add(k)
    pairs = []
    for i, text in enumerate(statements, start=1):
        if not cites[i] and flags is not None:
            flags.append(f"uncovered_statement:{i}")
        pairs.append((text, sorted(cites[i])))
    resp = build_response(pairs, len(documents))
    if len(resp.statements) != len(statements):
        raise SynthesisError("relabelled response does not re-segment to the closed-book statements")
    return resp


def reindex_response(resp: AttributedResponse, old: DocumentSet, new: DocumentSet) -> AttributedResponse:
    """Re-point citations from ``old`` indices to the same documents in ``new``."""
    pairs = [(s.text, [new.index_of(old.cite(k).doc_id) for k in s.citations]) for s in resp.statements]
    return build_response(pairs, len(new))


def inject_distractors(
    example: SyntheticExample,
    pool: Sequence[Document],
    k: int,
    rng_seed: int,
) -> SyntheticExample:
    """Add ``k`` documents from other queries, shuffle, and re-index gold citations."""
    if k < 0:
        raise ValueError("k must be >= 0")
    foreign = [d for d in pool if d.source_query_id != example.query_id]
    if len(foreign) != len(pool):
        raise ValueError("distractor pool contains documents from the example's own query")
    if len(pool) < k:
        raise PoolTooSmall(f"need {k} distractors, pool has {len(pool)}")
    rng = random.Random(rng_seed)
    taken = set(example.documents.ids())
    picks = []
    for d in rng.sample(list(pool), len(pool)):
        if len(picks) == k:
            break
        if d.doc_id not in taken:
            picks.append(replace(d, origin="distractor"))
            taken.add(d.doc_id)
    if len(picks) < k:
        raise PoolTooSmall(f"need {k} distinct distractors, found {len(picks)}")
    docs = list(example.documents) + picks
    rng.shuffle(docs)
    new_docs = DocumentSet(docs)
    return replace(
        example,
        documents=new_docs,
        gold_response=reindex_response(example.gold_response, example.documents, new_docs),
    )


def synthesize_example(
    query_id: str,
    query: str,
    generator: Generator,
    prompts: PromptBook | None = None,
    sampling: SamplingConfig = SamplingConfig(),
    group_size_range: tuple[int, int] = (2, 3),
    seed: int = 0,
) -> SyntheticExample:
    """Steps 1-5 for one query, before distractors are injected."""
    prompts = prompts or PromptBook()
    flags: list[str] = []
    closed_book = generate_closed_book_response(
        query, generator, prompts, sampling, derive_seed(seed, query_id, "response")
    )
    claims = decompose_claims(
        closed_book, generator, prompts, sampling, derive_seed(seed, query_id, "claims"), id_prefix=f"{query_id}-c"
    )
    claim_sets = combine_claims(
        claims, group_size_range, derive_seed(seed, query_id, "combine"), id_prefix=f"{query_id}-s"
    )
    by_id = {c.claim_id: c for c in claims}
    docs, doc_for_set = [], {}
    for j, cs in enumerate(claim_sets, start=1):
        doc_id = f"{query_id}-d{j}"
        docs.append(
            generate_document(
                cs, by_id, generator, prompts, sampling, derive_seed(seed, query_id, "doc", j), doc_id, query_id, flags
            )
        )
        doc_for_set[cs.set_id] = doc_id
    documents = DocumentSet(docs)
    gold = relabel_citations(closed_book, claims, claim_sets, doc_for_set, documents, flags)
    return SyntheticExample(
        query_id=query_id,
        query=query,
        closed_book=closed_book,
        documents=documents,
        gold_response=gold,
        claims=claims,
        claim_sets=claim_sets,
        doc_for_set=doc_for_set,
        relevant_doc_ids=frozenset(doc_for_set.values()),
        flags=flags,
    )


def distractor_pool(examples: Iterable[SyntheticExample], exclude_query_id: str) -> list[Document]:
    """Synthesized documents of every other query, in input order."""
    return [
        d
        for ex in examples
        if ex.query_id != exclude_query_id
        for d in ex.documents
        if d.origin == "synthesized"
    ]


def sft_record(example: SyntheticExample, prompts: PromptBook, response: str | None = None, **meta) -> dict:
    return {
        "prompt": prompts.attribution(example.query, example.documents),
        "response": render_response(example.gold_response) if response is None else response,
        "meta": {"query_id": example.query_id, **meta},
    }


def build_warmup_dataset(
    examples: Sequence[SyntheticExample],
    fraction: float = 0.2,
    rng_seed: int = 0,
    prompts: PromptBook | None = None,
) -> list[dict]:
    """Seeded sample of ``ceil(fraction * N)`` flag-free examples as SFT records."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    prompts = prompts or PromptBook()
    eligible = [ex for ex in examples if ex.flag_free]
    # round first so e.g. 0.2 * 50 cannot ceil to 11
    n = math.ceil(round(fraction * len(eligible), 9))
    picked = random.Random(rng_seed).sample(eligible, n)
    return [sft_record(ex, prompts, source="synthetic") for ex in picked]
