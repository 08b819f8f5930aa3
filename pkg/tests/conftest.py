from __future__ import annotations

import pytest

from kgrag.corpus import build_demo_graph
from kgrag.kg import Edge, Node, NodeCategory, RelationKind, SentenceRecord, SentenceRef, build_graph
from kgrag.llm import ChatRequest, ChatResponse, MockBackend


def make_node(node_id: str, label: str | None = None, category: str = "other") -> Node:
    return Node(id=node_id, label=label or node_id.upper(), category=NodeCategory(category))


def make_edge(edge_id, src, dst, relation="causal", provenance=()):
    return Edge(
        id=edge_id,
        src=src,
        dst=dst,
        relation=RelationKind(relation),
        provenance=tuple(SentenceRef(doc_id=d, sentence_id=s) for d, s in provenance),
    )


@pytest.fixture
def tiny_graph():
    """Three nodes, two edges: a->b (causal), c->a (status)."""
    nodes = [make_node("a"), make_node("b"), make_node("c")]
    edges = [make_edge("e1", "a", "b"), make_edge("e2", "c", "a", relation="status")]
    return build_graph(nodes, edges)


@pytest.fixture
def sentence_graph():
    """Three edges carrying four sentence refs across two docs."""
    sentences = [
        SentenceRecord(SentenceRef("doc-b", 2), "beta two"),
        SentenceRecord(SentenceRef("doc-a", 1), "alpha one"),
        SentenceRecord(SentenceRef("doc-a", 3), "alpha three"),
        SentenceRecord(SentenceRef("doc-b", 1), "beta one"),
    ]
    nodes = [make_node("x"), make_node("y"), make_node("z")]
    edges = [
        make_edge("e1", "x", "y", provenance=[("doc-a", 3), ("doc-b", 1)]),
        make_edge("e2", "y", "z", provenance=[("doc-a", 1)]),
        make_edge("e3", "z", "x", provenance=[("doc-b", 2), ("doc-a", 1)]),
    ]
    return build_graph(nodes, edges, sentences)


@pytest.fixture(scope="session")
def demo_graph():
    return build_demo_graph()


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    from kgrag.corpus import write_demo_corpus

    directory = tmp_path_factory.mktemp("demo-corpus")
    write_demo_corpus(directory)
    return directory


@pytest.fixture
def demo_backend(demo_graph):
    return MockBackend.for_graph(demo_graph)


class ScriptedBackend:
    """Replays a fixed list of completions, recording every request."""

    kind = "scripted"

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        if not self.responses:
            raise AssertionError("scripted backend ran out of responses")
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return ChatResponse(text=item)


class RecordingBackend:
    """Delegates to another backend while keeping every request."""

    def __init__(self, inner):
        self.inner = inner
        self.kind = inner.kind
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        return self.inner.complete(request)
