"""Small text helpers shared by the mock backends and claim alignment."""

from __future__ import annotations

import re
import string

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")

STOPWORDS = frozenset(
    """
    a about above after again against all also am an and any are as at be because been before being
    below between both but by can could did do does doing down during each few for from further had
    has have having he her here hers herself him himself his how i if in into is it its itself just
    me more most my myself no nor not now of off on once only or other our ours ourselves out over
    own same she should so some such than that the their theirs them themselves then there these
    they this those through to too under until up very was we were what when where which while who
    whom why will with would you your yours yourself yourselves
    """.split()
)


def tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.casefold())


def content_words(text: str) -> list[str]:
    """Case-folded alphanumeric tokens minus stopwords, in order."""
    return [t for t in tokens(text) if t not in STOPWORDS]


def normalize_answer(s: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    s = s.lower()
    s = "".join(ch for ch in s if ch not in set(string.punctuation))
    s = re.sub(r"\b(a|an|the)\b", " ", s)
    return " ".join(s.split())
