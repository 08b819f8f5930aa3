"""Four-stage retrieval pipeline over the failure knowledge graph.

Stages: term retrieval (LLM), rule-based one-hop sub-graph extraction,
LLM filtering of the extracted sub-graphs, and reasoning over the survivors.
When the assembled evidence would exceed the token limit, items are evicted
uniformly at random under a fixed seed before the reasoning call.

Three prompt-composition variants exist: ``vanilla`` sends the rendered
sub-graphs, ``with-sentences`` adds the provenance sentences behind the kept
edges, and ``only-sentences`` sends just those sentences.

Every run produces a trace (terms, ids kept and evicted, rendered prompts,
stage timings) that is sufficient to audit or replay it.
"""

from __future__ import annotations

import enum
import random
import time
from dataclasses import dataclass, field

from .kg import (
    KnowledgeGraph,
    SentenceRecord,
    UnknownEdgeError,
    UnknownNodeError,
    match_nodes,
    neighbors,
    sentences_for,
)
from .llm import (
    Backend,
    ChatRequest,
    PromptTemplate,
    load_templates,
    parse_id_list,
    parse_term_list,
    render_template,
)
from .tokens import DEFAULT_SCHEME, count_tokens

__all__ = [
    "Variant",
    "PipelineConfig",
    "SubGraph",
    "PipelineTrace",
    "Answer",
    "BudgetImpossibleError",
    "StageError",
    "retrieve_terms",
    "extract_subgraphs",
    "subgraph_for_node",
    "render_subgraph",
    "filter_subgraphs",
    "collect_sentences",
    "apply_budget",
    "BudgetResult",
    "reason",
    "answer_query",
    "SYSTEM_PROMPT",
]

SYSTEM_PROMPT = "You assist with automobile failure analysis."


class Variant(enum.Enum):
    VANILLA = "vanilla"
    WITH_SENTENCES = "with-sentences"
    ONLY_SENTENCES = "only-sentences"


class BudgetImpossibleError(Exception):
    """The reasoning prompt scaffold alone exceeds the token limit."""


class StageError(Exception):
    """A pipeline stage failed; ``stage`` names it, the cause is chained."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    variant: Variant = Variant.VANILLA
    token_limit: int = 8000
    seed: int = 0
    filter_enabled: bool = True
    templates: dict[str, PromptTemplate] | None = None
    token_scheme: str = DEFAULT_SCHEME

    def resolved_templates(self) -> dict[str, PromptTemplate]:
        return self.templates if self.templates is not None else load_templates()


@dataclass(frozen=True)
class SubGraph:
    """One-hop neighborhood of a target node, produced by one retrieved term."""

    target: str
    neighbor_nodes: frozenset[str]
    edges: frozenset[str]
    source_term: str


@dataclass
class PipelineTrace:
    question: str
    variant: str
    seed: int
    token_scheme: str
    token_limit: int
    filter_enabled: bool
    terms: list[str] = field(default_factory=list)
    matched_terms: list[str] = field(default_factory=list)
    unmatched_terms: list[str] = field(default_factory=list)
    extracted_ids: list[int] = field(default_factory=list)
    kept_ids: list[int] = field(default_factory=list)
    override_ids: list[int] | None = None
    evicted_ids: list[int] = field(default_factory=list)
    final_ids: list[int] = field(default_factory=list)
    sentences_used: list[dict] = field(default_factory=list)
    evicted_sentences: list[dict] = field(default_factory=list)
    prompts: dict[str, str] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def to_dict(self, include_timings: bool = True) -> dict:
        data = {
            "question": self.question,
            "variant": self.variant,
            "seed": self.seed,
            "token_scheme": self.token_scheme,
            "token_limit": self.token_limit,
            "filter_enabled": self.filter_enabled,
            "terms": list(self.terms),
            "matched_terms": list(self.matched_terms),
            "unmatched_terms": list(self.unmatched_terms),
            "extracted_ids": list(self.extracted_ids),
            "kept_ids": list(self.kept_ids),
            "override_ids": list(self.override_ids) if self.override_ids is not None else None,
            "evicted_ids": list(self.evicted_ids),
            "final_ids": list(self.final_ids),
            "sentences_used": list(self.sentences_used),
            "evicted_sentences": list(self.evicted_sentences),
            "prompts": dict(self.prompts),
            "flags": list(self.flags),
        }
        if include_timings:
            data["stage_seconds"] = dict(self.stage_seconds)
        return data


@dataclass(frozen=True)
class Answer:
    text: str
    trace: PipelineTrace


# ---------------------------------------------------------------------------
# Stage 1: term retrieval
# ---------------------------------------------------------------------------


def retrieve_terms(
    question: str,
    backend: Backend,
    template: PromptTemplate,
    trace: PipelineTrace | None = None,
) -> list[str]:
    """Ask the backend for knowledge-graph terms related to the question."""
    prompt = render_template(template, {"question": question})
    response = backend.complete(ChatRequest(system_prompt=SYSTEM_PROMPT, user_prompt=prompt))
    terms = parse_term_list(response.text)
    if trace is not None:
        trace.prompts["retrieve"] = prompt
        trace.terms = list(terms)
        if not terms:
            trace.flags.append("no-terms-retrieved")
    return terms


# ---------------------------------------------------------------------------
# Stage 2: sub-graph extraction
# ---------------------------------------------------------------------------


def subgraph_for_node(graph: KnowledgeGraph, node_id: str, source_term: str = "") -> SubGraph:
    """One-hop sub-graph around a node: all incident edges, both directions."""
    incoming, outgoing = neighbors(node_id, graph)
    edge_ids = frozenset(incoming) | frozenset(outgoing)
    endpoints: set[str] = set()
    for edge_id in edge_ids:
        edge = graph.edges[edge_id]
        endpoints.update((edge.src, edge.dst))
    endpoints.discard(node_id)
    return SubGraph(
        target=node_id,
        neighbor_nodes=frozenset(endpoints),
        edges=edge_ids,
        source_term=source_term,
    )


def extract_subgraphs(terms: list[str], graph: KnowledgeGraph) -> list[tuple[int, SubGraph]]:
    """One sub-graph per (term, matching node), numbered 1..n in stable order."""
    result: list[tuple[int, SubGraph]] = []
    for term in terms:
        for node_id in match_nodes(term, graph):
            result.append((len(result) + 1, subgraph_for_node(graph, node_id, term)))
    return result


def render_subgraph(sg: SubGraph, graph: KnowledgeGraph, sid: int | None = None) -> str:
    """Text block for one sub-graph: a target header plus one line per edge.

    Edges render in edge-id order as "<src> -[<relation>]-> <dst>"; duplicate
    lines (parallel edges with identical labels) collapse to one.
    """
    target = graph.nodes.get(sg.target)
    if target is None:
        raise UnknownNodeError(f"unknown node {sg.target!r}")
    header = f"target: {target.label}" if sid is None else f"[{sid}] target: {target.label}"
    lines = [header]
    seen: set[str] = set()
    for edge_id in sorted(sg.edges):
        edge = graph.edges.get(edge_id)
        if edge is None:
            raise UnknownEdgeError(f"unknown edge {edge_id!r}")
        line = (
            f"{graph.nodes[edge.src].label} -[{edge.relation.value}]-> "
            f"{graph.nodes[edge.dst].label}"
        )
        if line not in seen:
            seen.add(line)
            lines.append(line)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Stage 3: LLM filtering
# ---------------------------------------------------------------------------

_STRICT_FILTER_SUFFIX = "\n\nReply with only a JSON array of integers, for example [1, 2]."


def filter_subgraphs(
    subgraphs: list[tuple[int, SubGraph]],
    question: str,
    graph: KnowledgeGraph,
    backend: Backend,
    template: PromptTemplate,
    enabled: bool = True,
    trace: PipelineTrace | None = None,
) -> list[tuple[int, SubGraph]]:
    """Keep the sub-graphs the backend judges relevant; ids and order survive.

    With ``enabled`` false (the ablation mode) the input passes through
    unchanged. An unparseable selection is retried once with a stricter
    instruction, then fails open by keeping everything.
    """
    if not enabled:
        if trace is not None:
            trace.flags.append("filter-disabled")
        return list(subgraphs)
    if not subgraphs:
        return []

    blocks = "\n\n".join(render_subgraph(sg, graph, sid) for sid, sg in subgraphs)
    prompt = render_template(template, {"question": question, "candidates": blocks})
    if trace is not None:
        trace.prompts["filter"] = prompt

    ids = None
    for attempt, user_prompt in enumerate((prompt, prompt + _STRICT_FILTER_SUFFIX)):
        response = backend.complete(
            ChatRequest(system_prompt=SYSTEM_PROMPT, user_prompt=user_prompt)
        )
        ids = parse_id_list(response.text)
        if ids is not None:
            break
        if trace is not None and attempt == 0:
            trace.flags.append("filter-parse-retry")
    if ids is None:
        if trace is not None:
            trace.flags.append("filter-fallback-keep-all")
        return list(subgraphs)
    wanted = set(ids)
    return [(sid, sg) for sid, sg in subgraphs if sid in wanted]


# ---------------------------------------------------------------------------
# Sentence collection
# ---------------------------------------------------------------------------


def collect_sentences(
    kept: list[tuple[int, SubGraph]], graph: KnowledgeGraph
) -> list[SentenceRecord]:
    """Provenance sentences behind every kept edge, deduplicated and ordered."""
    edge_ids: set[str] = set()
    for _, sg in kept:
        edge_ids.update(sg.edges)
    return sentences_for(sorted(edge_ids), graph)


# ---------------------------------------------------------------------------
# Token budget
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetResult:
    kept_blocks: list[tuple[int, str]]
    kept_sentences: list[tuple[tuple[str, int], str]]
    evicted_block_ids: list[int]
    evicted_sentence_refs: list[tuple[str, int]]


def apply_budget(
    blocks: list[tuple[int, str]],
    sentence_items: list[tuple[tuple[str, int], str]],
    limit: int,
    seed: int,
    variant: Variant,
    scaffold_tokens: int = 0,
    scheme: str = DEFAULT_SCHEME,
) -> BudgetResult:
    """Evict random evidence items until the prompt fits the token limit.

    Items are removed one at a time, each chosen uniformly at random with the
    seeded generator, until scaffold plus remaining items fit. A final pass
    re-admits any evicted item that still fits, so every eviction left over is
    necessary: putting any one of them back would break the limit. Kept items
    keep their original order.
    """
    if scaffold_tokens > limit:
        raise BudgetImpossibleError(
            f"prompt scaffold is {scaffold_tokens} tokens, over the limit {limit}"
        )
    if variant is Variant.VANILLA and sentence_items:
        raise ValueError("vanilla prompts carry no sentences")
    if variant is Variant.ONLY_SENTENCES and blocks:
        raise ValueError("only-sentences prompts carry no sub-graph blocks")

    items: list[tuple[str, object, str]] = [("block", sid, text) for sid, text in blocks]
    items += [("sentence", ref, text) for ref, text in sentence_items]
    sizes = [count_tokens(text, scheme) for _, _, text in items]
    total = scaffold_tokens + sum(sizes)

    rng = random.Random(seed)
    alive = list(range(len(items)))
    evicted: list[int] = []
    while total > limit and alive:
        index = alive.pop(rng.randrange(len(alive)))
        evicted.append(index)
        total -= sizes[index]
    still_evicted: list[int] = []
    for index in evicted:
        if total + sizes[index] <= limit:
            alive.append(index)
            total += sizes[index]
        else:
            still_evicted.append(index)

    kept = set(alive)
    return BudgetResult(
        kept_blocks=[(sid, text) for i, (kind, sid, text) in enumerate(items)
                     if kind == "block" and i in kept],
        kept_sentences=[(ref, text) for i, (kind, ref, text) in enumerate(items)
                        if kind == "sentence" and i in kept],
        evicted_block_ids=sorted(
            items[i][1] for i in still_evicted if items[i][0] == "block"
        ),
        evicted_sentence_refs=sorted(
            items[i][1] for i in still_evicted if items[i][0] == "sentence"
        ),
    )


# ---------------------------------------------------------------------------
# Stage 4: reasoning
# ---------------------------------------------------------------------------


def reason(
    kept_blocks: list[tuple[int, str]],
    kept_sentences: list[tuple[tuple[str, int], str]],
    question: str,
    backend: Backend,
    template: PromptTemplate,
    variant: Variant,
    trace: PipelineTrace | None = None,
) -> str:
    """Render the reasoning prompt for the variant and return the completion."""
    subgraph_text = ""
    if variant is not Variant.ONLY_SENTENCES:
        subgraph_text = "\n\n".join(text for _, text in kept_blocks)
    sentence_text = ""
    if variant is not Variant.VANILLA:
        sentence_text = "\n".join(text for _, text in kept_sentences)
    prompt = render_template(
        template,
        {"question": question, "subgraphs": subgraph_text, "sentences": sentence_text},
    )
    if trace is not None:
        trace.prompts["reason"] = prompt
    response = backend.complete(ChatRequest(system_prompt=SYSTEM_PROMPT, user_prompt=prompt))
    return response.text


# ---------------------------------------------------------------------------
# Full composition
# ---------------------------------------------------------------------------


def _scaffold_tokens(template: PromptTemplate, question: str, scheme: str) -> int:
    empty = render_template(
        template, {"question": question, "subgraphs": "", "sentences": ""}
    )
    return count_tokens(empty, scheme)


def answer_query(
    question: str,
    graph: KnowledgeGraph,
    config: PipelineConfig,
    backend: Backend,
    include_ids: list[int] | None = None,
    exclude_ids: list[int] | None = None,
) -> Answer:
    """Run retrieve, extract, filter, budget, and reason for one question.

    ``include_ids``/``exclude_ids`` adjust the kept set between the filter
    stage and budgeting (the manual-steering hook used by the service).
    """
    question = question.strip()
    if not question:
        raise ValueError("question must be nonempty")
    templates = config.resolved_templates()
    scaffold = _scaffold_tokens(templates["reason"], question, config.token_scheme)
    if scaffold > config.token_limit:
        raise BudgetImpossibleError(
            f"prompt scaffold is {scaffold} tokens, over the limit {config.token_limit}"
        )
    trace = PipelineTrace(
        question=question,
        variant=config.variant.value,
        seed=config.seed,
        token_scheme=config.token_scheme,
        token_limit=config.token_limit,
        filter_enabled=config.filter_enabled,
    )

    def timed(stage, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except (BudgetImpossibleError, ValueError):
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
        finally:
            trace.stage_seconds[stage] = time.perf_counter() - start
        return result

    terms = timed("retrieve", lambda: retrieve_terms(question, backend, templates["retrieve"], trace))

    def extract():
        subgraphs = extract_subgraphs(terms, graph)
        trace.matched_terms = [t for t in terms if match_nodes(t, graph)]
        trace.unmatched_terms = [t for t in terms if not match_nodes(t, graph)]
        trace.extracted_ids = [sid for sid, _ in subgraphs]
        if not subgraphs:
            trace.flags.append("no-subgraphs-extracted")
        return subgraphs

    subgraphs = timed("extract", extract)

    kept = timed(
        "filter",
        lambda: filter_subgraphs(
            subgraphs,
            question,
            graph,
            backend,
            templates["filter"],
            enabled=config.filter_enabled,
            trace=trace,
        ),
    )
    trace.kept_ids = [sid for sid, _ in kept]
    if not set(trace.kept_ids) <= set(trace.extracted_ids):
        raise StageError("filter", AssertionError("kept ids escaped the extracted set"))

    if include_ids is not None or exclude_ids is not None:
        extracted_by_id = dict(subgraphs)
        wanted = set(trace.kept_ids)
        wanted.update(sid for sid in (include_ids or []) if sid in extracted_by_id)
        wanted.difference_update(exclude_ids or [])
        kept = [(sid, extracted_by_id[sid]) for sid in sorted(wanted)]
        trace.override_ids = [sid for sid, _ in kept]

    def sentences():
        if config.variant is Variant.VANILLA:
            return []
        return collect_sentences(kept, graph)

    sentence_records = timed("sentences", sentences)

    def budget():
        blocks = [(sid, render_subgraph(sg, graph, sid)) for sid, sg in kept]
        if config.variant is Variant.ONLY_SENTENCES:
            blocks = []
        items = [
            ((rec.ref.doc_id, rec.ref.sentence_id), rec.text) for rec in sentence_records
        ]
        return apply_budget(
            blocks,
            items,
            config.token_limit,
            config.seed,
            config.variant,
            scaffold_tokens=scaffold,
            scheme=config.token_scheme,
        )

    result = timed("budget", budget)
    trace.evicted_ids = list(result.evicted_block_ids)
    trace.final_ids = [sid for sid, _ in result.kept_blocks]
    trace.sentences_used = [
        {"doc": ref[0], "sent": ref[1]} for ref, _ in result.kept_sentences
    ]
    trace.evicted_sentences = [
        {"doc": ref[0], "sent": ref[1]} for ref in result.evicted_sentence_refs
    ]
    post_filter = trace.override_ids if trace.override_ids is not None else trace.kept_ids
    if config.variant is not Variant.ONLY_SENTENCES:
        if set(trace.evicted_ids) | set(trace.final_ids) != set(post_filter):
            raise StageError(
                "budget", AssertionError("evicted and kept blocks must partition the filter output")
            )

    text = timed(
        "reason",
        lambda: reason(
            result.kept_blocks,
            result.kept_sentences,
            question,
            backend,
            templates["reason"],
            config.variant,
            trace,
        ),
    )
    return Answer(text=text, trace=trace)
