"""Capture real service responses as fixtures for the frontend tests.

Run from the repository root with the Python package installed:

    python3 frontend/scripts/gen_fixtures.py

The vitest suite replays these bodies through a stubbed fetch, so the UI is
exercised against the exact bytes the service produces for the demo graph
with the mock backend.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from kgrag.corpus import build_demo_graph
from kgrag.llm import MockBackend
from kgrag.service import create_app

QUESTION = "Which causes and effects are linked to the clutch disc?"
SEED = 2
EXPLORE_NODE = "clutch-disc"
ISOLATED_NODE = "pivot-ball"
# Fullwidth Latin matches the clutch node through NFKC normalization, but the
# rendered block shares no token with the question, so the mock filter drops
# the sub-graph; the include override is the only way to get it reasoned over.
FILTERED_QUESTION = "Ｃｌｕｔｃｈが滑る原因を教えてください。"

OUT = Path(__file__).parents[1] / "tests" / "fixtures"


def main():
    graph = build_demo_graph()
    client = TestClient(create_app(graph, MockBackend.for_graph(graph)))
    OUT.mkdir(parents=True, exist_ok=True)

    base = client.post("/api/query", json={"question": QUESTION, "seed": SEED})
    base.raise_for_status()
    (OUT / "query_base.json").write_bytes(base.content)

    kept = base.json()["trace"]["kept_ids"]
    excluded_id = kept[0]
    excluded = client.post(
        "/api/query",
        json={"question": QUESTION, "seed": SEED, "exclude_ids": [excluded_id]},
    )
    excluded.raise_for_status()
    (OUT / "query_excluded.json").write_bytes(excluded.content)

    filtered = client.post(
        "/api/query", json={"question": FILTERED_QUESTION, "seed": SEED}
    )
    filtered.raise_for_status()
    assert filtered.json()["trace"]["kept_ids"] == [], "filter should drop the block"
    (OUT / "query_filtered_out.json").write_bytes(filtered.content)

    included = client.post(
        "/api/query",
        json={"question": FILTERED_QUESTION, "seed": SEED, "include_ids": [1]},
    )
    included.raise_for_status()
    (OUT / "query_included.json").write_bytes(included.content)

    neighbors = client.get("/api/graph/neighbors", params={"node": EXPLORE_NODE})
    neighbors.raise_for_status()
    (OUT / "neighbors_clutch_disc.json").write_bytes(neighbors.content)

    recenter_node = neighbors.json()["edges"][0]["src"]
    recenter = client.get("/api/graph/neighbors", params={"node": recenter_node})
    recenter.raise_for_status()
    (OUT / "neighbors_recenter.json").write_bytes(recenter.content)

    isolated = client.get("/api/graph/neighbors", params={"node": ISOLATED_NODE})
    isolated.raise_for_status()
    assert isolated.json()["edges"] == [], "fixture node must be isolated"
    (OUT / "neighbors_isolated.json").write_bytes(isolated.content)

    health = client.get("/api/health")
    health.raise_for_status()
    (OUT / "health.json").write_bytes(health.content)

    meta = {
        "question": QUESTION,
        "seed": SEED,
        "kept_ids": kept,
        "excluded_id": excluded_id,
        "filtered_question": FILTERED_QUESTION,
        "included_id": 1,
        "explore_node": EXPLORE_NODE,
        "recenter_node": recenter_node,
        "isolated_node": ISOLATED_NODE,
    }
    (OUT / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    for name in sorted(p.name for p in OUT.iterdir()):
        print(f"wrote {name}")


if __name__ == "__main__":
    main()
