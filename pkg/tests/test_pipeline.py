from __future__ import annotations

import io
import json

import pytest

from kgrag.kg import build_graph, load_aliases
from kgrag.llm import MOCK_REASON_PREAMBLE, MockBackend, load_templates
from kgrag.pipeline import (
    Answer,
    BudgetImpossibleError,
    PipelineConfig,
    StageError,
    SubGraph,
    Variant,
    answer_query,
    apply_budget,
    collect_sentences,
    extract_subgraphs,
    filter_subgraphs,
    reason,
    render_subgraph,
    retrieve_terms,
    subgraph_for_node,
)
from kgrag.tokens import count_tokens

from conftest import ScriptedBackend, RecordingBackend, make_edge, make_node
from oracles import brute_force_subgraph

TEMPLATES = load_templates()


@pytest.fixture
def labeled_graph():
    """Four components, each with one status edge, for filter fixtures."""
    nodes = [
        make_node("n1", label="clutch", category="component"),
        make_node("n2", label="engine", category="component"),
        make_node("n3", label="clutch pedal", category="component"),
        make_node("n4", label="radiator", category="component"),
        make_node("s1", label="judder", category="status"),
        make_node("s2", label="overheating", category="status"),
        make_node("s3", label="sticking", category="status"),
        make_node("s4", label="leak", category="status"),
    ]
    edges = [
        make_edge("e1", "n1", "s1"),
        make_edge("e2", "n2", "s2", relation="status"),
        make_edge("e3", "n3", "s3", relation="status"),
        make_edge("e4", "n4", "s4", relation="status"),
    ]
    return build_graph(nodes, edges)


class TestRetrieveTerms:
    def test_mock_lexicon_hit(self):
        backend = MockBackend(["clutch"])
        terms = retrieve_terms("the clutch slips", backend, TEMPLATES["retrieve"])
        assert terms == ["clutch"]

    def test_no_hits_yield_empty_set(self):
        backend = MockBackend(["gearbox"])
        assert retrieve_terms("cabin light flickers", backend, TEMPLATES["retrieve"]) == []

    def test_japanese_clutch_term_retrieved(self, demo_backend):
        terms = retrieve_terms(
            "クラッチが滑る原因は何ですか。", demo_backend, TEMPLATES["retrieve"]
        )
        assert "クラッチ" in terms


class TestExtractSubgraphs:
    def test_isolated_node(self):
        graph = build_graph([make_node("n1", label="hub")], [])
        [(sid, sg)] = extract_subgraphs(["hub"], graph)
        assert sid == 1
        assert sg == SubGraph(
            target="n1", neighbor_nodes=frozenset(), edges=frozenset(), source_term="hub"
        )

    def test_fixture_matches_incident_edge_scan(self, tiny_graph):
        [(_, sg)] = extract_subgraphs(["A"], tiny_graph)
        neighbors_set, edge_set = brute_force_subgraph(tiny_graph, "a")
        assert sg.neighbor_nodes == neighbors_set == frozenset({"b", "c"})
        assert sg.edges == edge_set == frozenset({"e1", "e2"})

    def test_unmatched_terms_produce_nothing(self, tiny_graph):
        assert extract_subgraphs(["missing"], tiny_graph) == []

    def test_one_term_matching_two_nodes_yields_two_subgraphs(self):
        nodes = [make_node("n1", label="engine"), make_node("n2", label="Engine")]
        graph = build_graph(nodes, [])
        result = extract_subgraphs(["engine"], graph)
        assert [(sid, sg.target) for sid, sg in result] == [(1, "n1"), (2, "n2")]

    def test_ids_follow_term_order_then_node_id(self, labeled_graph):
        result = extract_subgraphs(["engine", "clutch"], labeled_graph)
        assert [(sid, sg.target) for sid, sg in result] == [(1, "n2"), (2, "n1")]


class TestRenderSubgraph:
    def test_arrow_line_format(self):
        graph = build_graph(
            [make_node("a", label="A"), make_node("b", label="B")],
            [make_edge("e1", "a", "b")],
        )
        sg = subgraph_for_node(graph, "a")
        assert render_subgraph(sg, graph) == "target: A\nA -[causal]-> B"
        assert render_subgraph(sg, graph, sid=3) == "[3] target: A\nA -[causal]-> B"

    def test_empty_subgraph_renders_header_only(self):
        graph = build_graph([make_node("a", label="A")], [])
        assert render_subgraph(subgraph_for_node(graph, "a"), graph) == "target: A"

    def test_parallel_edges_with_identical_labels_collapse(self):
        graph = build_graph(
            [make_node("a", label="A"), make_node("b", label="B")],
            [make_edge("e1", "a", "b"), make_edge("e2", "a", "b")],
        )
        rendered = render_subgraph(subgraph_for_node(graph, "a"), graph)
        assert rendered == "target: A\nA -[causal]-> B"

    def test_relation_kinds_render_their_wire_names(self, sentence_graph):
        graph = build_graph(
            [make_node("a", label="A"), make_node("b", label="B")],
            [make_edge("e1", "a", "b", relation="weak_causal")],
        )
        rendered = render_subgraph(subgraph_for_node(graph, "a"), graph)
        assert "A -[weak_causal]-> B" in rendered

    def test_inconsistent_subgraph_raises(self, tiny_graph):
        from kgrag.kg import UnknownEdgeError, UnknownNodeError

        ghost_edge = SubGraph(
            target="a", neighbor_nodes=frozenset(), edges=frozenset({"e99"}), source_term="a"
        )
        with pytest.raises(UnknownEdgeError):
            render_subgraph(ghost_edge, tiny_graph)
        ghost_node = SubGraph(
            target="zz", neighbor_nodes=frozenset(), edges=frozenset(), source_term="zz"
        )
        with pytest.raises(UnknownNodeError):
            render_subgraph(ghost_node, tiny_graph)


class TestFilterSubgraphs:
    def test_empty_input(self, labeled_graph):
        backend = MockBackend()
        assert (
            filter_subgraphs([], "q", labeled_graph, backend, TEMPLATES["filter"]) == []
        )

    def test_mock_keeps_blocks_sharing_tokens(self, labeled_graph):
        subgraphs = extract_subgraphs(
            ["clutch", "engine", "clutch pedal", "radiator"], labeled_graph
        )
        assert [sid for sid, _ in subgraphs] == [1, 2, 3, 4]
        kept = filter_subgraphs(
            subgraphs,
            "why does the clutch judder",
            labeled_graph,
            MockBackend(),
            TEMPLATES["filter"],
        )
        assert [sid for sid, _ in kept] == [1, 3]

    def test_disabled_filter_is_identity(self, labeled_graph):
        subgraphs = extract_subgraphs(["clutch", "radiator"], labeled_graph)
        kept = filter_subgraphs(
            subgraphs,
            "anything",
            labeled_graph,
            ScriptedBackend([]),
            TEMPLATES["filter"],
            enabled=False,
        )
        assert kept == subgraphs

    def test_unparseable_selection_retries_with_stricter_instruction(self, labeled_graph):
        subgraphs = extract_subgraphs(["clutch"], labeled_graph)
        backend = ScriptedBackend(["keep the first one", "[1]"])
        kept = filter_subgraphs(
            subgraphs, "q", labeled_graph, backend, TEMPLATES["filter"]
        )
        assert [sid for sid, _ in kept] == [1]
        assert backend.requests[1].user_prompt.endswith("for example [1, 2].")

    def test_double_parse_failure_fails_open(self, labeled_graph):
        subgraphs = extract_subgraphs(["clutch", "engine"], labeled_graph)
        backend = ScriptedBackend(["nope", "still nope"])
        from kgrag.pipeline import PipelineTrace

        trace = PipelineTrace(
            question="q", variant="vanilla", seed=0, token_scheme="whitespace",
            token_limit=100, filter_enabled=True,
        )
        kept = filter_subgraphs(
            subgraphs, "q", labeled_graph, backend, TEMPLATES["filter"], trace=trace
        )
        assert kept == subgraphs
        assert "filter-fallback-keep-all" in trace.flags

    def test_out_of_range_ids_are_ignored(self, labeled_graph):
        subgraphs = extract_subgraphs(["clutch", "engine"], labeled_graph)
        backend = ScriptedBackend(["[2, 9]"])
        kept = filter_subgraphs(
            subgraphs, "q", labeled_graph, backend, TEMPLATES["filter"]
        )
        assert [sid for sid, _ in kept] == [2]


class TestCollectSentences:
    def test_no_provenance(self, tiny_graph):
        subgraphs = extract_subgraphs(["A"], tiny_graph)
        assert collect_sentences(subgraphs, tiny_graph) == []

    def test_shared_sentence_appears_once(self, sentence_graph):
        subgraphs = extract_subgraphs(["Y"], sentence_graph)  # e1 and e2 both touch y
        records = collect_sentences(subgraphs, sentence_graph)
        assert [r.text for r in records] == ["alpha one", "alpha three", "beta one"]

    def test_ordered_union(self, sentence_graph):
        subgraphs = extract_subgraphs(["X", "Y", "Z"], sentence_graph)
        records = collect_sentences(subgraphs, sentence_graph)
        assert [r.text for r in records] == [
            "alpha one",
            "alpha three",
            "beta one",
            "beta two",
        ]


def ten_token_block(index: int) -> tuple[int, str]:
    return index, " ".join(f"b{index}w{j}" for j in range(10))


class TestApplyBudget:
    def test_within_limit_is_identity(self):
        blocks = [ten_token_block(i) for i in (1, 2)]
        result = apply_budget(blocks, [], limit=100, seed=1, variant=Variant.VANILLA)
        assert result.kept_blocks == blocks
        assert result.evicted_block_ids == []

    def test_five_blocks_of_ten_under_limit_35_keep_exactly_three(self):
        blocks = [ten_token_block(i) for i in range(1, 6)]
        result = apply_budget(blocks, [], limit=35, seed=42, variant=Variant.VANILLA)
        assert len(result.kept_blocks) == 3
        assert len(result.evicted_block_ids) == 2
        again = apply_budget(blocks, [], limit=35, seed=42, variant=Variant.VANILLA)
        assert again == result

    def test_scaffold_over_limit_is_impossible(self):
        with pytest.raises(BudgetImpossibleError):
            apply_budget([], [], limit=3, seed=0, variant=Variant.VANILLA, scaffold_tokens=4)

    def test_kept_items_preserve_original_order(self):
        blocks = [ten_token_block(i) for i in range(1, 6)]
        result = apply_budget(blocks, [], limit=35, seed=7, variant=Variant.VANILLA)
        kept_ids = [sid for sid, _ in result.kept_blocks]
        assert kept_ids == sorted(kept_ids)

    def test_pooled_eviction_spans_blocks_and_sentences(self):
        blocks = [ten_token_block(1)]
        sentences = [(("d", i), "s " * 10) for i in range(3)]
        result = apply_budget(
            blocks, sentences, limit=25, seed=3, variant=Variant.WITH_SENTENCES
        )
        total = sum(count_tokens(t) for _, t in result.kept_blocks)
        total += sum(count_tokens(t) for _, t in result.kept_sentences)
        assert total <= 25
        evicted = len(result.evicted_block_ids) + len(result.evicted_sentence_refs)
        assert evicted == 2

    def test_variant_shape_validation(self):
        with pytest.raises(ValueError):
            apply_budget([], [(("d", 1), "s")], limit=10, seed=0, variant=Variant.VANILLA)
        with pytest.raises(ValueError):
            apply_budget([ten_token_block(1)], [], limit=10, seed=0,
                         variant=Variant.ONLY_SENTENCES)


class TestReason:
    def test_mock_echoes_single_block(self):
        text = reason(
            [(1, "[1] target: A\nA -[causal]-> B")],
            [],
            "q",
            MockBackend(),
            TEMPLATES["reason"],
            Variant.VANILLA,
        )
        assert text == MOCK_REASON_PREAMBLE + "\n[1] target: A\nA -[causal]-> B"

    def test_vanilla_with_no_blocks_still_answers(self):
        text = reason([], [], "q", MockBackend(), TEMPLATES["reason"], Variant.VANILLA)
        assert text == MOCK_REASON_PREAMBLE

    def test_only_sentences_prompt_has_no_blocks(self):
        backend = RecordingBackend(MockBackend())
        reason(
            [(1, "[1] target: A\nA -[causal]-> B")],
            [(("d", 1), "a sentence")],
            "q",
            backend,
            TEMPLATES["reason"],
            Variant.ONLY_SENTENCES,
        )
        prompt = backend.requests[0].user_prompt
        assert "-[" not in prompt
        assert "a sentence" in prompt


@pytest.fixture
def alias_graph():
    """Graph whose node is reachable only through an alias the filter drops."""
    nodes = [
        make_node("n1", label="clutch", category="component"),
        make_node("n2", label="slippage", category="status"),
    ]
    edges = [make_edge("e1", "n1", "n2")]
    aliases = load_aliases(io.StringIO('{"alias": "coupling", "node": "n1"}\n'))
    return build_graph(nodes, edges, aliases=aliases)


class TestAnswerQuery:
    def test_deterministic_across_repeated_runs(self, demo_graph, demo_backend):
        config = PipelineConfig(variant=Variant.WITH_SENTENCES, seed=11)
        question = "Which causes and effects are linked to the clutch disc?"
        first = answer_query(question, demo_graph, config, demo_backend)
        second = answer_query(question, demo_graph, config, demo_backend)
        assert first.text == second.text
        assert first.trace.to_dict(include_timings=False) == second.trace.to_dict(
            include_timings=False
        )

    def test_unmatched_terms_still_produce_answer(self, demo_graph):
        backend = MockBackend(["head gasket"])
        config = PipelineConfig(seed=0)
        answer = answer_query(
            "is the head gasket involved?", demo_graph, config, backend
        )
        assert answer.text == MOCK_REASON_PREAMBLE
        assert answer.trace.unmatched_terms == ["head gasket"]
        assert answer.trace.extracted_ids == []

    def test_empty_question_rejected(self, demo_graph, demo_backend):
        with pytest.raises(ValueError):
            answer_query("   ", demo_graph, PipelineConfig(), demo_backend)

    def test_filter_toggle_changes_only_filter_and_later_stages(self, alias_graph):
        backend = MockBackend.for_graph(alias_graph)
        question = "the coupling slips badly"
        with_filter = answer_query(
            question, alias_graph, PipelineConfig(seed=5), backend
        )
        without_filter = answer_query(
            question, alias_graph, PipelineConfig(seed=5, filter_enabled=False), backend
        )
        a, b = with_filter.trace, without_filter.trace
        assert a.terms == b.terms == ["coupling"]
        assert a.extracted_ids == b.extracted_ids == [1]
        assert a.prompts["retrieve"] == b.prompts["retrieve"]
        assert a.kept_ids == []
        assert b.kept_ids == [1]
        assert with_filter.text != without_filter.text

    def test_ablation_keeps_equal_extracted(self, demo_graph, demo_backend):
        config = PipelineConfig(seed=2, filter_enabled=False)
        answer = answer_query(
            "What failure relations involve the clutch?", demo_graph, config, demo_backend
        )
        assert answer.trace.kept_ids == answer.trace.extracted_ids

    def test_subset_chain_holds(self, demo_graph, demo_backend):
        config = PipelineConfig(seed=9)
        answer = answer_query(
            "What failure relations involve the clutch?", demo_graph, config, demo_backend
        )
        trace = answer.trace
        assert set(trace.kept_ids) <= set(trace.extracted_ids)
        assert set(trace.final_ids) | set(trace.evicted_ids) == set(trace.kept_ids)

    def test_budget_eviction_respects_limit(self, demo_graph, demo_backend):
        question = "What failure relations involve the clutch?"
        probe = answer_query(question, demo_graph, PipelineConfig(seed=1), demo_backend)
        full_tokens = count_tokens(probe.trace.prompts["reason"])
        limit = full_tokens - 5
        config = PipelineConfig(seed=1, token_limit=limit)
        answer = answer_query(question, demo_graph, config, demo_backend)
        assert answer.trace.evicted_ids
        assert count_tokens(answer.trace.prompts["reason"]) <= limit

    def test_budget_impossible_when_scaffold_exceeds_limit(self, demo_graph, demo_backend):
        config = PipelineConfig(seed=0, token_limit=5)
        with pytest.raises(BudgetImpossibleError):
            answer_query("clutch", demo_graph, config, demo_backend)

    def test_variant_containment(self, demo_graph, demo_backend):
        question = "Which causes and effects are linked to the clutch disc?"
        sentence_texts = [s.text for s in demo_graph.sentences.values()]

        vanilla = answer_query(
            question, demo_graph, PipelineConfig(variant=Variant.VANILLA, seed=3), demo_backend
        )
        assert all(t not in vanilla.trace.prompts["reason"] for t in sentence_texts)
        assert vanilla.trace.sentences_used == []

        only = answer_query(
            question,
            demo_graph,
            PipelineConfig(variant=Variant.ONLY_SENTENCES, seed=3),
            demo_backend,
        )
        assert "-[" not in only.trace.prompts["reason"]
        assert only.trace.sentences_used

        both = answer_query(
            question,
            demo_graph,
            PipelineConfig(variant=Variant.WITH_SENTENCES, seed=3),
            demo_backend,
        )
        assert "-[" in both.trace.prompts["reason"]
        assert both.trace.sentences_used

    def test_manual_overrides_adjust_kept_set(self, demo_graph, demo_backend):
        question = "Which causes and effects are linked to the clutch disc?"
        config = PipelineConfig(seed=4)
        base = answer_query(question, demo_graph, config, demo_backend)
        assert base.trace.kept_ids == [1, 2]

        excluded = answer_query(
            question, demo_graph, config, demo_backend, exclude_ids=[1]
        )
        assert excluded.trace.override_ids == [2]
        assert excluded.trace.final_ids == [2]

        unknown_include = answer_query(
            question, demo_graph, config, demo_backend, include_ids=[99], exclude_ids=[]
        )
        assert unknown_include.trace.override_ids == [1, 2]

    def test_stage_error_names_failing_stage(self, demo_graph):
        class Boom:
            kind = "boom"

            def complete(self, request):
                raise RuntimeError("backend down")

        with pytest.raises(StageError) as err:
            answer_query("clutch", demo_graph, PipelineConfig(), Boom())
        assert err.value.stage == "retrieve"

    def test_answer_type(self, demo_graph, demo_backend):
        answer = answer_query("clutch", demo_graph, PipelineConfig(), demo_backend)
        assert isinstance(answer, Answer)

    def test_every_backend_call_uses_temperature_zero(self, demo_graph, demo_backend):
        backend = RecordingBackend(demo_backend)
        answer_query(
            "Which causes and effects are linked to the clutch disc?",
            demo_graph,
            PipelineConfig(variant=Variant.WITH_SENTENCES, seed=1),
            backend,
        )
        assert len(backend.requests) >= 3  # retrieve, filter, reason
        assert all(request.temperature == 0.0 for request in backend.requests)
