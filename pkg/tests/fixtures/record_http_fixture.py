"""Regenerate http_fixture.json by recording exchanges with the in-process wire server.

Run from the repository root: ``python3 tests/fixtures/record_http_fixture.py``.
"""

from __future__ import annotations

import json
import urllib.request
from pathlib import Path

from attrforge.gateway import MockJudge, MockScorer, start_server
from attrforge.mockworld import simulated_generator

EXCHANGES = [
    ("/v1/generate", {"prompt": "Instruction: Write an accurate response.\nQuestion: Why do rivers meander?\nResponse:", "n": 3, "temperature": 1.0, "top_p": 0.95, "max_tokens": 512, "seed": 7}),
    ("/v1/logprob", {"context": "Document [1](Title: Mars): the rover landed on mars in 2012", "continuation": "The rover landed in 2012 [1]."}),
    ("/v1/entail", {"premise": "the rover landed on mars in 2012", "hypothesis": "the rover landed in 2012"}),
    ("/v1/entail", {"premise": "the rover landed on mars in 2012", "hypothesis": "the rover landed on venus"}),
]


def main() -> None:
    server, url = start_server(generator=simulated_generator(0.8), scorer=MockScorer(), judge=MockJudge())
    records = []
    try:
        for path, body in EXCHANGES:
            req = urllib.request.Request(
                url + path, data=json.dumps(body).encode(), headers={"Content-Type": "application/json"}, method="POST"
            )
            with urllib.request.urlopen(req) as resp:
                records.append({"path": path, "request": body, "response": json.loads(resp.read())})
    finally:
        server.shutdown()
    out = Path(__file__).with_name("http_fixture.json")
    out.write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
