"""Parse an attributed answer into statements and citations, then render it back."""

from __future__ import annotations

from attrforge.core import parse_response, render_response, strip_citations

raw = "Dr. Smith measured the tides [1][3]. They peak twice a day [2]. The moon matters [9]."

# three documents are available, so [9] cannot resolve
resp = parse_response(raw, doc_count=3)
for i, s in enumerate(resp.statements, start=1):
    print(f"statement {i}: {s.text!r}")
    print(f"  citations={s.citations} invalid={s.invalid_citations} span={s.char_span}")

# rendering is canonical: markers sit just before the terminal punctuation
print("rendered:", render_response(resp))
print("plain:   ", strip_citations(raw))
