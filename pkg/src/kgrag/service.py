"""HTTP service: interactive query answering with traces and graph inspection.

The service wraps the pipeline for the companion web console. Responses are
serialized deterministically (stage timings stay out of the wire format), so
a repeated request against the mock backend returns byte-identical bodies.
Manual include/exclude overrides adjust the kept sub-graph set between the
LLM filter and budgeting.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request, Response

from .kg import KnowledgeGraph, UnknownNodeError, edge_record
from .llm import Backend, GatewayError, PromptTemplate
from .pipeline import (
    BudgetImpossibleError,
    PipelineConfig,
    StageError,
    Variant,
    answer_query,
    extract_subgraphs,
    render_subgraph,
    subgraph_for_node,
)

__all__ = ["create_app"]

_VARIANTS = {v.value: v for v in Variant}


def _json_response(payload: dict, status_code: int = 200) -> Response:
    body = json.dumps(payload, ensure_ascii=False)
    return Response(content=body, status_code=status_code, media_type="application/json")


def _error(status_code: int, message: str, **extra) -> Response:
    return _json_response({"error": message, **extra}, status_code=status_code)


def create_app(
    graph: KnowledgeGraph | None,
    backend: Backend,
    templates: dict[str, PromptTemplate] | None = None,
    default_seed: int = 0,
    token_limit: int = 8000,
    ui_origin: str | None = None,
) -> FastAPI:
    """Build the API around one loaded graph and one backend."""
    app = FastAPI(title="kgrag service", docs_url=None, redoc_url=None)
    if ui_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=[ui_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    state = {"graph": graph}

    @app.get("/api/health")
    def health() -> Response:
        current = state["graph"]
        if current is None:
            return _error(503, "graph not loaded")
        return _json_response(
            {"status": "ok", "graph_stats": current.stats(), "backend_kind": backend.kind}
        )

    @app.get("/api/graph/neighbors")
    def graph_neighbors(node: str = "") -> Response:
        current = state["graph"]
        if current is None:
            return _error(503, "graph not loaded")
        try:
            sg = subgraph_for_node(current, node)
        except UnknownNodeError:
            return _error(404, f"unknown node {node!r}")
        edges = [edge_record(current.edges[eid]) for eid in sorted(sg.edges)]
        return _json_response(
            {
                "node": node,
                "label": current.nodes[node].label,
                "rendered": render_subgraph(sg, current),
                "edges": edges,
            }
        )

    @app.post("/api/query")
    async def query(request: Request) -> Response:
        current = state["graph"]
        if current is None:
            return _error(503, "graph not loaded")
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "request body must be a JSON object")
        if not isinstance(payload, dict):
            return _error(400, "request body must be a JSON object")

        question = payload.get("question")
        if not isinstance(question, str) or not question.strip():
            return _error(400, "question must be a nonempty string")
        variant_name = payload.get("variant", Variant.VANILLA.value)
        if variant_name not in _VARIANTS:
            return _error(400, f"unknown variant {variant_name!r}")
        seed = payload.get("seed", default_seed)
        if not isinstance(seed, int) or isinstance(seed, bool):
            return _error(400, "seed must be an integer")
        filter_enabled = payload.get("filter_enabled", True)
        if not isinstance(filter_enabled, bool):
            return _error(400, "filter_enabled must be a boolean")

        overrides = {}
        for key in ("include_ids", "exclude_ids"):
            value = payload.get(key)
            if value is None:
                continue
            if not isinstance(value, list) or not all(
                isinstance(x, int) and not isinstance(x, bool) for x in value
            ):
                return _error(400, f"{key} must be a list of integers")
            overrides[key] = value
        include = overrides.get("include_ids")
        exclude = overrides.get("exclude_ids")
        if include and exclude and set(include) & set(exclude):
            return _error(422, "include_ids and exclude_ids must be disjoint")

        config = PipelineConfig(
            variant=_VARIANTS[variant_name],
            token_limit=token_limit,
            seed=seed,
            filter_enabled=filter_enabled,
            templates=templates,
        )
        try:
            answer = answer_query(
                question,
                current,
                config,
                backend,
                include_ids=include,
                exclude_ids=exclude,
            )
        except StageError as exc:
            return _error(502, str(exc), stage=exc.stage)
        except (BudgetImpossibleError, GatewayError) as exc:
            return _error(502, str(exc))

        # Extraction is deterministic, so re-deriving it from the traced terms
        # reproduces exactly the blocks the pipeline saw.
        blocks = {
            str(sid): render_subgraph(sg, current, sid)
            for sid, sg in extract_subgraphs(answer.trace.terms, current)
        }
        return _json_response(
            {
                "answer": answer.text,
                "trace": answer.trace.to_dict(include_timings=False),
                "subgraphs": blocks,
            }
        )

    return app
