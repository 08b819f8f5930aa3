"""Deterministic clutch-themed demo corpus: graph, sentences, and QA dataset.

The corpus is small but shaped like the real thing: a bilingual failure
knowledge graph centred on the clutch, provenance sentences behind the causal
edges, and a QA dataset whose reference answers quote rendered sub-graph
lines, so retrieval-backed methods measurably outscore a bare LLM under the
mock backend.

Run ``python -m kgrag.corpus OUT_DIR`` to materialize the files; the same
content ships pre-generated under ``kgrag/data/demo``.
"""

from __future__ import annotations

import json
from pathlib import Path

from .evaluation import QaDataset, QaPair, dump_dataset
from .kg import (
    Edge,
    KnowledgeGraph,
    Node,
    NodeCategory,
    RelationKind,
    SentenceRecord,
    SentenceRef,
    build_graph,
    dump_graph,
    sentences_for,
)
from .pipeline import render_subgraph, subgraph_for_node

__all__ = ["build_demo_graph", "build_demo_dataset", "demo_documents", "write_demo_corpus"]

_NODES = [
    # systems
    ("sys-powertrain", "powertrain", "system"),
    ("sys-transmission", "transmission system", "system"),
    ("sys-clutch", "clutch system", "system"),
    ("sys-hydraulic", "clutch hydraulic system", "system"),
    ("sys-cooling", "cooling system", "system"),
    # components
    ("clutch", "clutch", "component"),
    ("clutch-pedal", "clutch pedal", "component"),
    ("clutch-disc", "clutch disc", "component"),
    ("pressure-plate", "pressure plate", "component"),
    ("release-bearing", "release bearing", "component"),
    ("flywheel", "flywheel", "component"),
    ("master-cylinder", "clutch master cylinder", "component"),
    ("slave-cylinder", "clutch slave cylinder", "component"),
    ("clutch-fork", "clutch fork", "component"),
    ("pilot-bearing", "pilot bearing", "component"),
    ("input-shaft", "input shaft", "component"),
    ("gearbox", "gearbox", "component"),
    ("engine", "engine", "component"),
    ("crankshaft", "crankshaft", "component"),
    ("diaphragm-spring", "diaphragm spring", "component"),
    ("friction-facing", "friction facing", "component"),
    ("hydraulic-line", "hydraulic line", "component"),
    ("fluid-reservoir", "fluid reservoir", "component"),
    # parts
    ("rivet", "rivet", "part"),
    ("spline-hub", "spline hub", "part"),
    ("piston-seal", "piston seal", "part"),
    ("return-spring", "return spring", "part"),
    ("pivot-ball", "pivot ball", "part"),
    ("bleed-valve", "bleed valve", "part"),
    ("damper-spring", "damper spring", "part"),
    # statuses
    ("judder", "judder", "status"),
    ("slippage", "slippage", "status"),
    ("drag", "clutch drag", "status"),
    ("wear", "wear", "status"),
    ("overheating", "overheating", "status"),
    ("vibration", "vibration", "status"),
    ("noise", "abnormal noise", "status"),
    ("misalignment", "misalignment", "status"),
    ("fluid-leak", "fluid leak", "status"),
    ("contamination", "oil contamination", "status"),
    ("fatigue", "material fatigue", "status"),
    ("corrosion", "corrosion", "status"),
    ("sticking", "pedal sticking", "status"),
    ("hard-pedal", "hard pedal feel", "status"),
    ("incomplete-disengagement", "incomplete disengagement", "status"),
    # Japanese cluster
    ("kurachi", "クラッチ", "component"),
    ("kurachi-pedaru", "クラッチペダル", "component"),
    ("mamou", "摩耗", "status"),
    ("suberi", "滑り", "status"),
    ("ion", "異音", "status"),
]

_SENTENCES = [
    ("doc-0001", 1, "Oil contamination on the friction facing caused the clutch to slip under load."),
    ("doc-0001", 2, "Prolonged slippage overheated the pressure plate."),
    ("doc-0002", 1, "Overheating led to material fatigue in the diaphragm spring."),
    ("doc-0002", 2, "Fatigue of the spring produced judder during launch."),
    ("doc-0003", 1, "Wear of the clutch disc facing resulted in slippage at high torque."),
    ("doc-0003", 2, "Flywheel misalignment was identified as the source of the judder."),
    ("doc-0004", 1, "Judder propagated through the driveline as vibration."),
    ("doc-0004", 2, "A fluid leak at the slave cylinder prevented complete disengagement."),
    ("doc-0005", 1, "Incomplete disengagement caused the clutch to drag in first gear."),
    ("doc-0005", 2, "Persistent drag accelerated wear of the friction facing."),
    ("doc-0006", 1, "Corrosion inside the master cylinder made the pedal stick."),
    ("doc-0006", 2, "A sticking pedal produced a hard pedal feel for the driver."),
    ("doc-0007", 1, "クラッチの摩耗が進行し、滑りが発生した。"),
    ("doc-0007", 2, "発進時にクラッチペダル付近から異音が確認された。"),
    ("doc-0008", 1, "The release bearing emitted abnormal noise when the pedal was pressed."),
    ("doc-0008", 2, "The worn pilot bearing was replaced after noise was traced to it."),
]

# (src, dst, relation, [(doc, sent), ...]) -- edge ids are assigned in order.
_EDGES = [
    # hierarchy
    ("sys-powertrain", "engine", "hierarchical", []),
    ("sys-powertrain", "sys-transmission", "hierarchical", []),
    ("sys-transmission", "gearbox", "hierarchical", []),
    ("sys-transmission", "sys-clutch", "hierarchical", []),
    ("sys-clutch", "clutch", "hierarchical", []),
    ("sys-clutch", "clutch-pedal", "hierarchical", []),
    ("sys-clutch", "sys-hydraulic", "hierarchical", []),
    ("clutch", "clutch-disc", "hierarchical", []),
    ("clutch", "pressure-plate", "hierarchical", []),
    ("clutch", "release-bearing", "hierarchical", []),
    ("clutch", "flywheel", "hierarchical", []),
    ("clutch", "clutch-fork", "hierarchical", []),
    ("clutch", "pilot-bearing", "hierarchical", []),
    ("clutch", "diaphragm-spring", "hierarchical", []),
    ("clutch-disc", "friction-facing", "hierarchical", []),
    ("clutch-disc", "rivet", "hierarchical", []),
    ("clutch-disc", "spline-hub", "hierarchical", []),
    ("clutch-disc", "damper-spring", "hierarchical", []),
    ("sys-hydraulic", "master-cylinder", "hierarchical", []),
    ("sys-hydraulic", "slave-cylinder", "hierarchical", []),
    ("sys-hydraulic", "hydraulic-line", "hierarchical", []),
    ("sys-hydraulic", "fluid-reservoir", "hierarchical", []),
    ("sys-hydraulic", "bleed-valve", "hierarchical", []),
    ("master-cylinder", "piston-seal", "hierarchical", []),
    ("clutch-pedal", "return-spring", "hierarchical", []),
    ("engine", "crankshaft", "hierarchical", []),
    ("gearbox", "input-shaft", "hierarchical", []),
    # causal chains
    ("contamination", "slippage", "causal", [("doc-0001", 1)]),
    ("slippage", "overheating", "causal", [("doc-0001", 2)]),
    ("overheating", "fatigue", "causal", [("doc-0002", 1)]),
    ("fatigue", "judder", "causal", [("doc-0002", 2)]),
    ("wear", "slippage", "causal", [("doc-0003", 1)]),
    ("misalignment", "judder", "causal", [("doc-0003", 2)]),
    ("judder", "vibration", "causal", [("doc-0004", 1)]),
    ("fluid-leak", "incomplete-disengagement", "causal", [("doc-0004", 2)]),
    ("incomplete-disengagement", "drag", "causal", [("doc-0005", 1)]),
    ("drag", "wear", "causal", [("doc-0005", 2)]),
    ("corrosion", "sticking", "causal", [("doc-0006", 1)]),
    ("sticking", "hard-pedal", "causal", [("doc-0006", 2)]),
    ("mamou", "suberi", "causal", [("doc-0007", 1)]),
    # status co-occurrence
    ("clutch-disc", "wear", "status", [("doc-0003", 1)]),
    ("release-bearing", "noise", "status", [("doc-0008", 1)]),
    ("pressure-plate", "overheating", "status", [("doc-0001", 2)]),
    ("flywheel", "misalignment", "status", [("doc-0003", 2)]),
    ("clutch-pedal", "sticking", "status", [("doc-0006", 2)]),
    ("master-cylinder", "fluid-leak", "status", []),
    ("slave-cylinder", "fluid-leak", "status", [("doc-0004", 2)]),
    ("pilot-bearing", "noise", "status", [("doc-0008", 2)]),
    ("friction-facing", "contamination", "status", [("doc-0001", 1)]),
    ("kurachi", "mamou", "status", [("doc-0007", 1)]),
    ("kurachi", "suberi", "status", [("doc-0007", 1)]),
    ("kurachi-pedaru", "ion", "status", [("doc-0007", 2)]),
    ("clutch", "judder", "status", []),
    ("clutch", "slippage", "status", []),
    # weaker co-occurrence links
    ("vibration", "noise", "weak_causal", []),
    ("contamination", "drag", "weak_causal", []),
    ("wear", "judder", "weak_causal", []),
    ("misalignment", "wear", "weak_causal", []),
    ("corrosion", "fluid-leak", "weak_causal", []),
    ("suberi", "overheating", "weak_causal", []),
]

# Targets for the QA dataset; every one has at least one incident edge.
_QA_TARGETS = [
    "clutch",
    "clutch-disc",
    "pressure-plate",
    "release-bearing",
    "flywheel",
    "master-cylinder",
    "slave-cylinder",
    "clutch-pedal",
    "friction-facing",
    "pilot-bearing",
    "sys-clutch",
    "sys-hydraulic",
    "wear",
    "slippage",
    "judder",
    "overheating",
    "drag",
    "fluid-leak",
    "contamination",
    "sticking",
    "kurachi",
    "mamou",
]

_QUESTION_STEMS = (
    "What failure relations involve the {label}?",
    "Which causes and effects are linked to the {label}?",
    "What does the failure record say about the {label}?",
)
_QUESTION_STEM_JA = "{label}に関する故障の連鎖を説明してください。"


def build_demo_graph() -> KnowledgeGraph:
    nodes = [Node(id=i, label=l, category=NodeCategory(c)) for i, l, c in _NODES]
    sentences = [
        SentenceRecord(ref=SentenceRef(doc_id=d, sentence_id=s), text=t)
        for d, s, t in _SENTENCES
    ]
    edges = [
        Edge(
            id=f"e{index:02d}",
            src=src,
            dst=dst,
            relation=RelationKind(kind),
            provenance=tuple(SentenceRef(doc_id=d, sentence_id=s) for d, s in refs),
        )
        for index, (src, dst, kind, refs) in enumerate(_EDGES, start=1)
    ]
    return build_graph(nodes, edges, sentences)


def _is_japanese(label: str) -> bool:
    return any(ord(ch) > 0x3000 for ch in label)


def build_demo_dataset(graph: KnowledgeGraph | None = None) -> QaDataset:
    """QA pairs whose references quote rendered relation lines of one target."""
    graph = graph if graph is not None else build_demo_graph()
    pairs = []
    for index, node_id in enumerate(_QA_TARGETS):
        node = graph.nodes[node_id]
        if _is_japanese(node.label):
            question = _QUESTION_STEM_JA.format(label=node.label)
        else:
            stem = _QUESTION_STEMS[index % len(_QUESTION_STEMS)]
            question = stem.format(label=node.label)
        sg = subgraph_for_node(graph, node_id)
        relation_lines = render_subgraph(sg, graph).splitlines()[1:4]
        provenance = sentences_for(sorted(sg.edges), graph)[:1]
        reference = "\n".join(relation_lines + [s.text for s in provenance])
        pairs.append(
            QaPair(
                id=f"qa-{index + 1:03d}",
                question=question,
                reference_answer=reference,
                source_doc=provenance[0].ref.doc_id if provenance else None,
            )
        )
    return QaDataset(pairs=tuple(pairs))


def demo_documents() -> list[dict]:
    """The raw failure documents the sentence store was carved from."""
    docs: dict[str, list[str]] = {}
    for doc_id, _, text in _SENTENCES:
        docs.setdefault(doc_id, []).append(text)
    return [{"doc_id": doc_id, "text": " ".join(texts)} for doc_id, texts in docs.items()]


def write_demo_corpus(directory: str | Path) -> dict[str, Path]:
    """Write the corpus files; returns the path of each artifact."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    graph = build_demo_graph()
    serialized = dump_graph(graph)
    paths = {}
    for name in ("nodes", "edges", "sentences"):
        paths[name] = directory / f"{name}.jsonl"
        paths[name].write_text(serialized[name], encoding="utf-8")
    paths["dataset"] = directory / "dataset.jsonl"
    paths["dataset"].write_text(dump_dataset(build_demo_dataset(graph)), encoding="utf-8")
    paths["documents"] = directory / "documents.jsonl"
    paths["documents"].write_text(
        "".join(json.dumps(d, ensure_ascii=False) + "\n" for d in demo_documents()),
        encoding="utf-8",
    )
    return paths


if __name__ == "__main__":
    import sys

    out = sys.argv[1] if len(sys.argv) > 1 else "demo-corpus"
    for name, path in write_demo_corpus(out).items():
        print(f"{name}: {path}")
