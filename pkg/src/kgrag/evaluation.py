"""Experiment harness: datasets, multi-run method comparison, report emission.

An experiment runs every (method, question, run) cell with a seed derived
from the base seed, scores each generated answer against the reference with
ROUGE-1/2/L, and averages per run over the question set, then over runs.
Cell failures are excluded from the means and reported, never fatal.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .kg import DuplicateIdError, KnowledgeGraph, MalformedRecordError, Source, _iter_jsonl
from .llm import (
    Backend,
    ChatRequest,
    PromptTemplate,
    default_gen_instruction,
    load_templates,
    render_template,
)
from .pipeline import SYSTEM_PROMPT, PipelineConfig, PipelineTrace, Variant, answer_query
from .rouge import rouge_scores
from .tokens import DEFAULT_SCHEME, count_tokens

__all__ = [
    "QaPair",
    "QaDataset",
    "MethodSpec",
    "MethodKind",
    "ExperimentReport",
    "load_dataset",
    "dump_dataset",
    "gen_dataset",
    "parse_method",
    "derive_seed",
    "run_experiment",
    "emit_report",
]

METRIC_KEYS = ("rouge1", "rouge2", "rougeL")


@dataclass(frozen=True)
class QaPair:
    id: str
    question: str
    reference_answer: str
    source_doc: str | None = None


@dataclass(frozen=True)
class QaDataset:
    pairs: tuple[QaPair, ...]

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


def load_dataset(source: Source) -> QaDataset:
    """Load {id, question, reference_answer, source_doc?} JSON-lines records."""
    pairs: list[QaPair] = []
    seen: set[str] = set()
    for lineno, record in _iter_jsonl(source):
        for key in ("id", "question", "reference_answer"):
            value = record.get(key)
            if not isinstance(value, str) or not value.strip():
                raise MalformedRecordError(f"missing or invalid field {key!r}", lineno)
        if record["id"] in seen:
            raise DuplicateIdError(f"duplicate dataset id {record['id']!r}")
        seen.add(record["id"])
        source_doc = record.get("source_doc")
        if source_doc is not None and not isinstance(source_doc, str):
            raise MalformedRecordError("source_doc must be a string", lineno)
        pairs.append(
            QaPair(
                id=record["id"],
                question=record["question"],
                reference_answer=record["reference_answer"],
                source_doc=source_doc,
            )
        )
    return QaDataset(pairs=tuple(pairs))


def dump_dataset(dataset: QaDataset) -> str:
    lines = []
    for pair in dataset:
        record = {
            "id": pair.id,
            "question": pair.question,
            "reference_answer": pair.reference_answer,
        }
        if pair.source_doc is not None:
            record["source_doc"] = pair.source_doc
        lines.append(json.dumps(record, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def gen_dataset(
    documents: Source,
    backend: Backend,
    instruction: str | None = None,
) -> tuple[QaDataset, list[dict]]:
    """Generate QA pairs from {doc_id, text} documents via the backend.

    Returns the dataset plus a record of per-document failures; one bad
    document never aborts the rest.
    """
    instruction = instruction if instruction is not None else default_gen_instruction()
    pairs: list[QaPair] = []
    failures: list[dict] = []
    for lineno, record in _iter_jsonl(documents):
        doc_id = record.get("doc_id")
        text = record.get("text")
        if not isinstance(doc_id, str) or not isinstance(text, str) or not text.strip():
            raise MalformedRecordError("document records need doc_id and text", lineno)
        prompt = f"{instruction.rstrip()}\n\nDocument {doc_id}:\n{text}"
        try:
            response = backend.complete(
                ChatRequest(system_prompt=SYSTEM_PROMPT, user_prompt=prompt)
            )
            generated = _parse_qa(response.text)
        except Exception as exc:
            failures.append({"doc_id": doc_id, "error": str(exc)})
            continue
        for index, (question, answer) in enumerate(generated, start=1):
            pair_id = f"{doc_id}-q{index}" if len(generated) > 1 else f"{doc_id}-q1"
            pairs.append(
                QaPair(
                    id=pair_id,
                    question=question,
                    reference_answer=answer,
                    source_doc=doc_id,
                )
            )
    return QaDataset(pairs=tuple(pairs)), failures


def _parse_qa(completion: str) -> list[tuple[str, str]]:
    data = json.loads(completion)
    items = data if isinstance(data, list) else [data]
    result = []
    for item in items:
        question = item.get("question")
        answer = item.get("answer")
        if not isinstance(question, str) or not isinstance(answer, str):
            raise ValueError("generation output needs question and answer strings")
        if not question.strip() or not answer.strip():
            raise ValueError("generated question and answer must be nonempty")
        result.append((question, answer))
    if not result:
        raise ValueError("generation output held no QA pairs")
    return result


# ---------------------------------------------------------------------------
# Methods
# ---------------------------------------------------------------------------


class MethodKind:
    NO_RETRIEVAL = "no-retrieval"
    IR_PIPELINE = "ir-pipeline"


@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str
    variant: Variant = Variant.VANILLA
    filter_enabled: bool = True


_VARIANT_BY_METHOD = {
    "ir-vanilla": Variant.VANILLA,
    "ir-with-sentences": Variant.WITH_SENTENCES,
    "ir-only-sentences": Variant.ONLY_SENTENCES,
}

DEFAULT_METHODS = (
    "no-retrieval",
    "ir-vanilla",
    "ir-with-sentences",
    "ir-only-sentences",
    "ir-vanilla:no-filter",
)


def parse_method(spec: str) -> MethodSpec:
    """Parse strings like "ir-vanilla" or "ir-with-sentences:no-filter"."""
    base, _, modifier = spec.partition(":")
    filter_enabled = True
    if modifier:
        if modifier != "no-filter":
            raise ValueError(f"unknown method modifier {modifier!r} in {spec!r}")
        filter_enabled = False
    if base == "no-retrieval":
        if modifier:
            raise ValueError("no-retrieval takes no modifiers")
        return MethodSpec(name=spec, kind=MethodKind.NO_RETRIEVAL)
    if base in _VARIANT_BY_METHOD:
        return MethodSpec(
            name=spec,
            kind=MethodKind.IR_PIPELINE,
            variant=_VARIANT_BY_METHOD[base],
            filter_enabled=filter_enabled,
        )
    raise ValueError(f"unknown method {spec!r}")


def derive_seed(base: int, *parts) -> int:
    """Stable 64-bit per-cell seed, independent of process or schedule."""
    material = "\x1f".join(str(p) for p in (base, *parts))
    return int.from_bytes(hashlib.sha256(material.encode("utf-8")).digest()[:8], "big")


# ---------------------------------------------------------------------------
# Experiment execution
# ---------------------------------------------------------------------------


@dataclass
class MethodSummary:
    name: str
    rouge1_f1: float
    rouge2_f1: float
    rougeL_f1: float
    avg_output_tokens: float
    runs: int
    cells_used: int
    cells_excluded: int


@dataclass
class ExperimentReport:
    schema_version: int
    config: dict
    methods: list[MethodSummary]
    cells: dict
    failures: list[dict]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": dict(self.config),
            "methods": [vars(m).copy() for m in self.methods],
            "cells": self.cells,
            "failures": list(self.failures),
        }


def _answer_no_retrieval(
    question: str, backend: Backend, templates: dict[str, PromptTemplate]
) -> str:
    prompt = render_template(
        templates["reason"], {"question": question, "subgraphs": "", "sentences": ""}
    )
    response = backend.complete(ChatRequest(system_prompt=SYSTEM_PROMPT, user_prompt=prompt))
    return response.text


def _run_cell(
    method: MethodSpec,
    pair: QaPair,
    run: int,
    graph: KnowledgeGraph | None,
    backend: Backend,
    base_seed: int,
    templates: dict[str, PromptTemplate],
    token_limit: int,
    scheme: str,
) -> tuple[dict, PipelineTrace | None]:
    seed = derive_seed(base_seed, method.name, pair.id, run)
    trace = None
    if method.kind == MethodKind.NO_RETRIEVAL:
        text = _answer_no_retrieval(pair.question, backend, templates)
    else:
        if graph is None:
            raise ValueError("pipeline methods need a loaded graph")
        config = PipelineConfig(
            variant=method.variant,
            token_limit=token_limit,
            seed=seed,
            filter_enabled=method.filter_enabled,
            templates=templates,
            token_scheme=scheme,
        )
        answer = answer_query(pair.question, graph, config, backend)
        text, trace = answer.text, answer.trace
    scores = rouge_scores(text, pair.reference_answer, scheme)
    cell = {
        key: {
            "precision": scores[key].precision,
            "recall": scores[key].recall,
            "f1": scores[key].f1,
        }
        for key in METRIC_KEYS
    }
    cell["output_tokens"] = count_tokens(text, scheme)
    return cell, trace


def run_experiment(
    dataset: QaDataset,
    methods: Iterable[MethodSpec],
    graph: KnowledgeGraph | None,
    backend: Backend,
    runs: int = 5,
    base_seed: int = 0,
    token_limit: int = 8000,
    templates: dict[str, PromptTemplate] | None = None,
    scheme: str = DEFAULT_SCHEME,
    jobs: int = 4,
    trace_hook: Callable[[str, str, int, PipelineTrace], None] | None = None,
) -> ExperimentReport:
    """Execute methods x pairs x runs and aggregate ROUGE F1 and token counts.

    Aggregation is mean over pairs within a run, then mean over runs; the full
    per-cell matrix stays in the report so either convention can be recomputed.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    methods = list(methods)
    if len({m.name for m in methods}) != len(methods):
        raise ValueError("method names must be unique")
    templates = templates if templates is not None else load_templates()

    tasks = [
        (method, run, pair) for method in methods for run in range(runs) for pair in dataset
    ]
    results: dict[tuple[str, int, str], dict] = {}
    traces: dict[tuple[str, int, str], PipelineTrace | None] = {}
    failures: list[dict] = []

    def execute(task):
        method, run, pair = task
        return _run_cell(
            method, pair, run, graph, backend, base_seed, templates, token_limit, scheme
        )

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for task, outcome in zip(tasks, pool.map(lambda t: _safe(execute, t), tasks)):
            method, run, pair = task
            key = (method.name, run, pair.id)
            if isinstance(outcome, Exception):
                failures.append(
                    {
                        "method": method.name,
                        "pair": pair.id,
                        "run": run,
                        "error": str(outcome),
                    }
                )
            else:
                results[key], traces[key] = outcome

    if trace_hook is not None:
        for method in methods:
            for run in range(runs):
                for pair in dataset:
                    trace = traces.get((method.name, run, pair.id))
                    if trace is not None:
                        trace_hook(method.name, pair.id, run, trace)

    cells: dict[str, list[dict]] = {}
    summaries: list[MethodSummary] = []
    for method in methods:
        run_blocks = []
        used = 0
        metric_run_means = {key: [] for key in METRIC_KEYS}
        token_run_means: list[float] = []
        for run in range(runs):
            pair_cells = {}
            for pair in dataset:
                cell = results.get((method.name, run, pair.id))
                if cell is not None:
                    pair_cells[pair.id] = cell
            run_blocks.append({"run": run, "pairs": pair_cells})
            if pair_cells:
                used += len(pair_cells)
                for key in METRIC_KEYS:
                    values = [c[key]["f1"] for c in pair_cells.values()]
                    metric_run_means[key].append(sum(values) / len(values))
                tokens = [c["output_tokens"] for c in pair_cells.values()]
                token_run_means.append(sum(tokens) / len(tokens))
        cells[method.name] = run_blocks

        def over_runs(values: list[float]) -> float:
            return sum(values) / len(values) if values else 0.0

        summaries.append(
            MethodSummary(
                name=method.name,
                rouge1_f1=over_runs(metric_run_means["rouge1"]),
                rouge2_f1=over_runs(metric_run_means["rouge2"]),
                rougeL_f1=over_runs(metric_run_means["rougeL"]),
                avg_output_tokens=over_runs(token_run_means),
                runs=runs,
                cells_used=used,
                cells_excluded=len(dataset) * runs - used,
            )
        )

    return ExperimentReport(
        schema_version=1,
        config={
            "runs": runs,
            "base_seed": base_seed,
            "token_scheme": scheme,
            "token_limit": token_limit,
            "dataset_size": len(dataset),
            "aggregation": "mean-over-pairs-then-runs",
        },
        methods=summaries,
        cells=cells,
        failures=failures,
    )


def _safe(fn, arg):
    try:
        return fn(arg)
    except Exception as exc:
        return exc


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def emit_report(report: ExperimentReport, fmt: str = "markdown") -> str:
    """Serialize a report as markdown tables, CSV, or versioned JSON."""
    if fmt == "json":
        return json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n"
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            [
                "method",
                "rouge1_f1",
                "rouge2_f1",
                "rougeL_f1",
                "avg_output_tokens",
                "runs",
                "cells_used",
                "cells_excluded",
            ]
        )
        for m in report.methods:
            writer.writerow(
                [
                    m.name,
                    repr(m.rouge1_f1),
                    repr(m.rouge2_f1),
                    repr(m.rougeL_f1),
                    repr(m.avg_output_tokens),
                    m.runs,
                    m.cells_used,
                    m.cells_excluded,
                ]
            )
        return buffer.getvalue()
    if fmt == "markdown":
        lines = [
            "| Method | ROUGE-1 F1 | ROUGE-2 F1 | ROUGE-L F1 |",
            "|---|---|---|---|",
        ]
        for m in report.methods:
            lines.append(
                f"| {m.name} | {m.rouge1_f1:.4f} | {m.rouge2_f1:.4f} | {m.rougeL_f1:.4f} |"
            )
        lines += ["", "| Method | Average Tokens |", "|---|---|"]
        for m in report.methods:
            lines.append(f"| {m.name} | {m.avg_output_tokens:.1f} |")
        if report.failures:
            lines += ["", f"Excluded cells: {len(report.failures)}"]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
