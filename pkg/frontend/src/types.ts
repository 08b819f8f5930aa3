// Wire types mirroring the service JSON exactly; the UI renders only from
// these fields and never computes pipeline results itself.

export interface SentenceRefJson {
  doc: string;
  sent: number;
}

export interface TraceJson {
  question: string;
  variant: string;
  seed: number;
  token_scheme: string;
  token_limit: number;
  filter_enabled: boolean;
  terms: string[];
  matched_terms: string[];
  unmatched_terms: string[];
  extracted_ids: number[];
  kept_ids: number[];
  override_ids: number[] | null;
  evicted_ids: number[];
  final_ids: number[];
  sentences_used: SentenceRefJson[];
  evicted_sentences: SentenceRefJson[];
  prompts: Record<string, string>;
  flags: string[];
}

export interface QueryResponse {
  answer: string;
  trace: TraceJson;
  subgraphs: Record<string, string>;
}

export interface QueryRequest {
  question: string;
  variant?: string;
  seed?: number;
  filter_enabled?: boolean;
  include_ids?: number[];
  exclude_ids?: number[];
}

export interface EdgeJson {
  id: string;
  src: string;
  dst: string;
  relation: string;
  provenance: SentenceRefJson[];
}

export interface NeighborsResponse {
  node: string;
  label: string;
  rendered: string;
  edges: EdgeJson[];
}

export interface HealthResponse {
  status: string;
  graph_stats: { nodes: number; edges: number; sentences: number };
  backend_kind: string;
}
