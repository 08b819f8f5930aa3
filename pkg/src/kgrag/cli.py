"""Command-line front door: ingest, query, eval, gen-dataset, serve.

Exit codes: 0 success, 2 input or knowledge-base errors (including usage
errors), 3 backend failures.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .bundle import load_bundle, write_bundle
from .evaluation import (
    DEFAULT_METHODS,
    dump_dataset,
    emit_report,
    gen_dataset,
    load_dataset,
    parse_method,
    run_experiment,
)
from .kg import GraphError, KnowledgeGraph
from .llm import Backend, GatewayError, HttpBackend, MockBackend, load_templates
from .pipeline import (
    BudgetImpossibleError,
    PipelineConfig,
    StageError,
    Variant,
    answer_query,
)

_VARIANT_CHOICES = [v.value for v in Variant]


def _fail(code: int, message: str):
    click.echo(message, err=True)
    sys.exit(code)


def _load_kb(path: str) -> KnowledgeGraph:
    try:
        return load_bundle(path)
    except GraphError as exc:
        _fail(2, f"knowledge base error: {exc}")


def _make_backend(kind: str, graph: KnowledgeGraph | None) -> Backend:
    if kind == "mock":
        return MockBackend.for_graph(graph) if graph is not None else MockBackend()
    try:
        return HttpBackend.from_env()
    except GatewayError as exc:
        _fail(2, str(exc))


@click.group()
def main():
    """Graph RAG over failure knowledge graphs."""


@main.command()
@click.option("--nodes", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--edges", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--sentences", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--aliases", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def ingest(nodes, edges, sentences, aliases, out):
    """Validate graph files and write a bundle directory with a manifest."""
    try:
        graph = write_bundle(nodes, edges, sentences, out, aliases)
    except GraphError as exc:
        _fail(2, f"ingest failed: {exc}")
    stats = graph.stats()
    click.echo(f"nodes={stats['nodes']} edges={stats['edges']} sentences={stats['sentences']}")


@main.command()
@click.option("--kb", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--question", required=True)
@click.option("--variant", type=click.Choice(_VARIANT_CHOICES), default=Variant.VANILLA.value)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--no-filter", is_flag=True, help="Skip the LLM filtering stage.")
@click.option("--backend", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
@click.option("--token-limit", type=int, default=8000, show_default=True)
@click.option("--prompts", type=click.Path(exists=True, file_okay=False),
              help="Directory with retrieve/filter/reason templates.")
@click.option("--trace-out", type=click.Path(dir_okay=False))
def query(kb, question, variant, seed, no_filter, backend, token_limit, prompts, trace_out):
    """Answer one question against a knowledge base and print the answer."""
    graph = _load_kb(kb)
    config = PipelineConfig(
        variant=Variant(variant),
        token_limit=token_limit,
        seed=seed,
        filter_enabled=not no_filter,
        templates=load_templates(prompts) if prompts else None,
    )
    try:
        answer = answer_query(question, graph, config, _make_backend(backend, graph))
    except (StageError, GatewayError) as exc:
        _fail(3, f"backend failure: {exc}")
    except (BudgetImpossibleError, ValueError) as exc:
        _fail(2, str(exc))
    if trace_out:
        Path(trace_out).write_text(
            json.dumps(answer.trace.to_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
    click.echo(answer.text)


@main.command("eval")
@click.option("--kb", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--methods", default=",".join(DEFAULT_METHODS), show_default=True)
@click.option("--runs", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--backend", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
@click.option("--jobs", type=int, default=4, show_default=True)
@click.option("--token-limit", type=int, default=8000, show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["markdown", "csv", "json"]),
              default="json", show_default=True)
def eval_command(kb, dataset_path, methods, runs, seed, backend, jobs, token_limit,
                 report_path, fmt):
    """Run the multi-method experiment and print the score tables."""
    graph = _load_kb(kb)
    try:
        dataset = load_dataset(dataset_path)
        specs = [parse_method(m.strip()) for m in methods.split(",") if m.strip()]
        if not specs:
            raise ValueError("no methods given")
    except (GraphError, ValueError) as exc:
        _fail(2, f"input error: {exc}")
    report = run_experiment(
        dataset,
        specs,
        graph,
        _make_backend(backend, graph),
        runs=runs,
        base_seed=seed,
        token_limit=token_limit,
        jobs=jobs,
    )
    if report_path:
        Path(report_path).write_text(emit_report(report, fmt), encoding="utf-8")
    click.echo(emit_report(report, "markdown"), nl=False)


@main.command("gen-dataset")
@click.option("--docs", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--backend", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
@click.option("--instruction", type=click.Path(exists=True, dir_okay=False),
              help="Override the generation instruction text.")
def gen_dataset_command(docs, out, backend, instruction):
    """Generate a QA dataset from failure documents."""
    instruction_text = (
        Path(instruction).read_text(encoding="utf-8") if instruction else None
    )
    try:
        dataset, failures = gen_dataset(docs, _make_backend(backend, None), instruction_text)
    except GraphError as exc:
        _fail(2, f"input error: {exc}")
    Path(out).write_text(dump_dataset(dataset), encoding="utf-8")
    click.echo(f"pairs={len(dataset)} failures={len(failures)}")
    for failure in failures:
        click.echo(f"  {failure['doc_id']}: {failure['error']}", err=True)


@main.command()
@click.option("--kb", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--backend", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
@click.option("--listen", default="127.0.0.1:8080", show_default=True)
@click.option("--ui-origin", help="Origin allowed for CORS, e.g. http://localhost:5173.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--token-limit", type=int, default=8000, show_default=True)
def serve(kb, backend, listen, ui_origin, seed, token_limit):
    """Serve the query API for the web console."""
    import uvicorn

    from .service import create_app

    graph = _load_kb(kb)
    host, _, port = listen.rpartition(":")
    if not host or not port.isdigit():
        _fail(2, f"--listen must look like HOST:PORT, got {listen!r}")
    app = create_app(
        graph,
        _make_backend(backend, graph),
        default_seed=seed,
        token_limit=token_limit,
        ui_origin=ui_origin,
    )
    uvicorn.run(app, host=host, port=int(port))


if __name__ == "__main__":
    main()
