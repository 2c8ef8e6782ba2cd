"""Shared hypothesis strategies."""

from __future__ import annotations

from hypothesis import strategies as st

from attrforge.core import AttributedResponse, Statement

WORDS = ["paris", "capital", "river", "museum", "the", "old", "bridge", "Seine", "3.14", "e.g.", "etc.", "Dr.", "No"]
PIECES = WORDS + ["[1]", "[2]", "[3]", "[0]", "[12]", "[x]", "[1-3]", ".", "!", "?", '"', ")", "(", " ", "\n", "\t"]


def raw_responses():
    """Arbitrary text biased toward the citation grammar's edge cases."""
    piece = st.one_of(st.sampled_from(PIECES), st.text(max_size=3))
    return st.lists(piece, max_size=30).map(lambda xs: " ".join(xs) if len(xs) % 2 else "".join(xs))


_plain_word = st.sampled_from(["paris", "capital", "river", "museum", "old", "bridge", "Seine", "tower", "3.14"])


@st.composite
def attributed_responses(draw, max_statements: int = 6):
    """A well-formed response and the document count it was built for."""
    n = draw(st.integers(0, 6))
    count = draw(st.integers(1, max_statements))
    statements = []
    for i in range(count):
        words = draw(st.lists(_plain_word, min_size=1, max_size=8))
        text = " ".join(words)
        text = text[0].upper() + text[1:]
        last = i == count - 1
        end = draw(st.sampled_from([".", "?", "!", ""] if last else [".", "?", "!"]))
        ks = draw(st.sets(st.integers(0, 9), max_size=4))
        statements.append(
            Statement(
                text=text + end,
                citations=tuple(k for k in ks if 1 <= k <= n),
                invalid_citations=tuple(k for k in ks if not 1 <= k <= n),
            )
        )
    return AttributedResponse(raw_text="", statements=tuple(statements)), n
