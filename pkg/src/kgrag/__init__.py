"""Graph RAG for failure knowledge graphs.

Retrieval works the information-retrieval way: terms come from the question,
one-hop sub-graphs come from the graph itself, an LLM filters them, and the
survivors are rendered into the reasoning prompt under a token budget. No
database query generation is involved, so any pre-existing graph loads.
"""

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
    load_graph,
    load_graph_tsv,
    match_nodes,
    neighbors,
    sentences_for,
)
from .llm import (
    ChatRequest,
    ChatResponse,
    HttpBackend,
    MockBackend,
    PromptTemplate,
    load_templates,
    render_template,
)
from .pipeline import (
    Answer,
    PipelineConfig,
    PipelineTrace,
    SubGraph,
    Variant,
    answer_query,
    apply_budget,
    extract_subgraphs,
    filter_subgraphs,
    render_subgraph,
    retrieve_terms,
)
from .rouge import RougeScore, lcs_length, rouge_l, rouge_n, rouge_scores
from .tokens import count_tokens, tokenize
from .evaluation import (
    MethodSpec,
    QaDataset,
    QaPair,
    emit_report,
    gen_dataset,
    load_dataset,
    parse_method,
    run_experiment,
)

__version__ = "0.1.0"
