"""In-memory failure knowledge graph: load, validate, index, query.

The graph is loaded once from JSON-lines files (or a TSV triple list) and is
immutable afterwards, so any number of readers may share it. Edges are
directed and may carry provenance references into a sentence store holding
the cleansed source-document sentences they were derived from.
"""

from __future__ import annotations

import enum
import io
import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

__all__ = [
    "NodeCategory",
    "RelationKind",
    "Node",
    "Edge",
    "SentenceRef",
    "SentenceRecord",
    "KnowledgeGraph",
    "GraphError",
    "DuplicateIdError",
    "DanglingEndpointError",
    "DanglingProvenanceError",
    "MalformedRecordError",
    "UnknownNodeError",
    "UnknownEdgeError",
    "normalize_label",
    "load_graph",
    "load_graph_tsv",
    "load_aliases",
    "dump_graph",
    "match_nodes",
    "neighbors",
    "sentences_for",
]

Source = Union[str, Path, IO[str], Iterable[str]]


class GraphError(Exception):
    """Base class for graph loading and lookup failures."""


class DuplicateIdError(GraphError):
    pass


class DanglingEndpointError(GraphError):
    pass


class DanglingProvenanceError(GraphError):
    pass


class MalformedRecordError(GraphError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownNodeError(GraphError):
    pass


class UnknownEdgeError(GraphError):
    pass


class NodeCategory(enum.Enum):
    SYSTEM = "system"
    COMPONENT = "component"
    PART = "part"
    STATUS = "status"
    OTHER = "other"


class RelationKind(enum.Enum):
    CAUSAL = "causal"
    WEAK_CAUSAL = "weak_causal"
    STATUS = "status"
    HIERARCHICAL = "hierarchical"


def normalize_label(text: str) -> str:
    """Canonical form used for label matching: NFKC, casefolded, trimmed."""
    return unicodedata.normalize("NFKC", text).casefold().strip()


@dataclass(frozen=True)
class Node:
    id: str
    label: str
    category: NodeCategory

    @property
    def normalized_label(self) -> str:
        return normalize_label(self.label)


@dataclass(frozen=True, order=True)
class SentenceRef:
    doc_id: str
    sentence_id: int


@dataclass(frozen=True)
class SentenceRecord:
    ref: SentenceRef
    text: str


@dataclass(frozen=True)
class Edge:
    id: str
    src: str
    dst: str
    relation: RelationKind
    provenance: tuple[SentenceRef, ...] = ()


@dataclass(frozen=True)
class KnowledgeGraph:
    """Validated, fully indexed graph. Treat every field as read-only."""

    nodes: dict[str, Node]
    edges: dict[str, Edge]
    out_index: dict[str, tuple[str, ...]]
    in_index: dict[str, tuple[str, ...]]
    label_index: dict[str, tuple[str, ...]]
    sentences: dict[SentenceRef, SentenceRecord]
    aliases: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def stats(self) -> dict[str, int]:
        return {
            "nodes": len(self.nodes),
            "edges": len(self.edges),
            "sentences": len(self.sentences),
        }


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _iter_jsonl(source: Source) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) from a path, file handle, or line iterable."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as handle:
            yield from _iter_jsonl_lines(handle)
    else:
        yield from _iter_jsonl_lines(source)


def _iter_jsonl_lines(lines: Iterable[str]) -> Iterator[tuple[int, dict]]:
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecordError(f"invalid JSON ({exc.msg})", lineno) from exc
        if not isinstance(record, dict):
            raise MalformedRecordError("record is not a JSON object", lineno)
        yield lineno, record


def _require(record: dict, key: str, kind: type, lineno: int):
    value = record.get(key)
    if not isinstance(value, kind) or (kind is str and not value.strip()):
        raise MalformedRecordError(f"missing or invalid field {key!r}", lineno)
    return value


def _parse_node(record: dict, lineno: int) -> Node:
    node_id = _require(record, "id", str, lineno)
    label = _require(record, "label", str, lineno)
    raw = _require(record, "category", str, lineno)
    try:
        category = NodeCategory(raw)
    except ValueError:
        raise MalformedRecordError(f"unknown category {raw!r}", lineno) from None
    return Node(id=node_id, label=label, category=category)


def _parse_edge(record: dict, lineno: int) -> Edge:
    edge_id = _require(record, "id", str, lineno)
    src = _require(record, "src", str, lineno)
    dst = _require(record, "dst", str, lineno)
    raw = _require(record, "relation", str, lineno)
    try:
        relation = RelationKind(raw)
    except ValueError:
        raise MalformedRecordError(f"unknown relation {raw!r}", lineno) from None
    refs = []
    for item in record.get("provenance", []):
        if not isinstance(item, dict) or "doc" not in item or "sent" not in item:
            raise MalformedRecordError("provenance entries need doc and sent", lineno)
        if not isinstance(item["sent"], int) or isinstance(item["sent"], bool):
            raise MalformedRecordError("provenance sent must be an integer", lineno)
        refs.append(SentenceRef(doc_id=str(item["doc"]), sentence_id=item["sent"]))
    return Edge(id=edge_id, src=src, dst=dst, relation=relation, provenance=tuple(refs))


def _parse_sentence(record: dict, lineno: int) -> SentenceRecord:
    doc = _require(record, "doc", str, lineno)
    text = _require(record, "text", str, lineno)
    sent = record.get("sent")
    if not isinstance(sent, int) or isinstance(sent, bool):
        raise MalformedRecordError("missing or invalid field 'sent'", lineno)
    return SentenceRecord(ref=SentenceRef(doc_id=doc, sentence_id=sent), text=text)


def build_graph(
    nodes: Iterable[Node],
    edges: Iterable[Edge],
    sentences: Iterable[SentenceRecord] = (),
    aliases: dict[str, tuple[str, ...]] | None = None,
) -> KnowledgeGraph:
    """Assemble and validate a graph from already-parsed parts."""
    sentence_map: dict[SentenceRef, SentenceRecord] = {}
    for record in sentences:
        if record.ref in sentence_map:
            raise DuplicateIdError(
                f"duplicate sentence ({record.ref.doc_id}, {record.ref.sentence_id})"
            )
        sentence_map[record.ref] = record

    node_map: dict[str, Node] = {}
    for node in nodes:
        if node.id in node_map:
            raise DuplicateIdError(f"duplicate node id {node.id!r}")
        node_map[node.id] = node

    edge_map: dict[str, Edge] = {}
    for edge in edges:
        if edge.id in edge_map:
            raise DuplicateIdError(f"duplicate edge id {edge.id!r}")
        for endpoint in (edge.src, edge.dst):
            if endpoint not in node_map:
                raise DanglingEndpointError(
                    f"edge {edge.id!r} references missing node {endpoint!r}"
                )
        for ref in edge.provenance:
            if ref not in sentence_map:
                raise DanglingProvenanceError(
                    f"edge {edge.id!r} references missing sentence "
                    f"({ref.doc_id}, {ref.sentence_id})"
                )
        edge_map[edge.id] = edge

    out_lists: dict[str, list[str]] = {}
    in_lists: dict[str, list[str]] = {}
    for edge in edge_map.values():
        out_lists.setdefault(edge.src, []).append(edge.id)
        in_lists.setdefault(edge.dst, []).append(edge.id)
    label_lists: dict[str, list[str]] = {}
    for node in node_map.values():
        label_lists.setdefault(node.normalized_label, []).append(node.id)

    return KnowledgeGraph(
        nodes=node_map,
        edges=edge_map,
        out_index={k: tuple(sorted(v)) for k, v in out_lists.items()},
        in_index={k: tuple(sorted(v)) for k, v in in_lists.items()},
        label_index={k: tuple(sorted(v)) for k, v in label_lists.items()},
        sentences=sentence_map,
        aliases=dict(aliases or {}),
    )


def load_graph(
    nodes_source: Source,
    edges_source: Source,
    sentences_source: Source = (),
    aliases_source: Source | None = None,
) -> KnowledgeGraph:
    """Load a graph from JSON-lines sources (paths, handles, or line iterables)."""
    sentences = [_parse_sentence(r, n) for n, r in _iter_jsonl(sentences_source)]
    nodes = [_parse_node(r, n) for n, r in _iter_jsonl(nodes_source)]
    edges = [_parse_edge(r, n) for n, r in _iter_jsonl(edges_source)]
    aliases = load_aliases(aliases_source) if aliases_source is not None else None
    return build_graph(nodes, edges, sentences, aliases)


def load_aliases(source: Source) -> dict[str, tuple[str, ...]]:
    """Load alias records {"alias": str, "node": str} keyed by normalized alias."""
    table: dict[str, list[str]] = {}
    for lineno, record in _iter_jsonl(source):
        alias = _require(record, "alias", str, lineno)
        node_id = _require(record, "node", str, lineno)
        table.setdefault(normalize_label(alias), []).append(node_id)
    return {k: tuple(sorted(set(v))) for k, v in table.items()}


def load_graph_tsv(source: Source) -> KnowledgeGraph:
    """Import src_label TAB relation TAB dst_label triples.

    Nodes are auto-created with category "other", keyed by exact label; edge
    ids follow line order. No provenance in this format.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    elif isinstance(source, io.IOBase):
        lines = source.read().splitlines()
    else:
        lines = [line.rstrip("\n") for line in source]

    nodes: dict[str, Node] = {}
    by_label: dict[str, str] = {}
    edges: list[Edge] = []

    def node_for(label: str) -> str:
        if label not in by_label:
            node_id = f"n{len(by_label) + 1}"
            by_label[label] = node_id
            nodes[node_id] = Node(id=node_id, label=label, category=NodeCategory.OTHER)
        return by_label[label]

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            raise MalformedRecordError("expected src TAB relation TAB dst", lineno)
        src_label, raw_relation, dst_label = (p.strip() for p in parts)
        try:
            relation = RelationKind(raw_relation)
        except ValueError:
            raise MalformedRecordError(f"unknown relation {raw_relation!r}", lineno) from None
        edges.append(
            Edge(
                id=f"e{len(edges) + 1}",
                src=node_for(src_label),
                dst=node_for(dst_label),
                relation=relation,
            )
        )

    return build_graph(nodes.values(), edges)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def node_record(node: Node) -> dict:
    return {"id": node.id, "label": node.label, "category": node.category.value}


def edge_record(edge: Edge) -> dict:
    return {
        "id": edge.id,
        "src": edge.src,
        "dst": edge.dst,
        "relation": edge.relation.value,
        "provenance": [{"doc": r.doc_id, "sent": r.sentence_id} for r in edge.provenance],
    }


def sentence_record(record: SentenceRecord) -> dict:
    return {"doc": record.ref.doc_id, "sent": record.ref.sentence_id, "text": record.text}


def dump_graph(graph: KnowledgeGraph) -> dict[str, str]:
    """Serialize back to the three JSON-lines documents, sorted by id."""

    def lines(records: Iterable[dict]) -> str:
        return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)

    return {
        "nodes": lines(node_record(n) for n in sorted(graph.nodes.values(), key=lambda n: n.id)),
        "edges": lines(edge_record(e) for e in sorted(graph.edges.values(), key=lambda e: e.id)),
        "sentences": lines(
            sentence_record(s) for s in sorted(graph.sentences.values(), key=lambda s: s.ref)
        ),
    }


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def match_nodes(term: str, graph: KnowledgeGraph) -> list[str]:
    """All node ids whose normalized label (or alias) equals the normalized term."""
    key = normalize_label(term)
    ids = set(graph.label_index.get(key, ()))
    ids.update(graph.aliases.get(key, ()))
    return sorted(ids & graph.nodes.keys())


def neighbors(node_id: str, graph: KnowledgeGraph) -> tuple[list[str], list[str]]:
    """(incoming edge ids, outgoing edge ids) for a node, sorted by edge id."""
    if node_id not in graph.nodes:
        raise UnknownNodeError(f"unknown node {node_id!r}")
    return list(graph.in_index.get(node_id, ())), list(graph.out_index.get(node_id, ()))


def sentences_for(edge_ids: Iterable[str], graph: KnowledgeGraph) -> list[SentenceRecord]:
    """Provenance sentences of the given edges, deduplicated, (doc, sent)-ordered."""
    refs: set[SentenceRef] = set()
    for edge_id in edge_ids:
        edge = graph.edges.get(edge_id)
        if edge is None:
            raise UnknownEdgeError(f"unknown edge {edge_id!r}")
        refs.update(edge.provenance)
    return [graph.sentences[ref] for ref in sorted(refs)]
