import { ApiClient, ApiError } from "./api";
import { SessionState } from "./state";
import type { NeighborsResponse, QueryRequest, QueryResponse, TraceJson } from "./types";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}

function idList(ids: number[] | null): string {
  if (ids === null) {
    return "(not applied)";
  }
  return ids.length ? ids.join(", ") : "(none)";
}

export class App {
  readonly state = new SessionState();
  private breadcrumb: string[] = [];
  private inFlight = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    this.root.innerHTML = "";
    this.root.appendChild(this.buildSkeleton());
    this.wire();
    void this.refreshHealth();
  }

  // ----- DOM scaffolding ---------------------------------------------------

  private buildSkeleton(): HTMLElement {
    const container = el("div", { class: "console" });
    container.innerHTML = `
      <header>
        <h1>Failure KG console</h1>
        <span id="health-badge" class="badge">checking service…</span>
      </header>
      <div id="error-banner" class="banner hidden"></div>
      <section class="ask">
        <textarea id="question" rows="3"
          placeholder="Describe the fault, e.g. the clutch judders at launch"></textarea>
        <div class="controls">
          <label>variant
            <select id="variant">
              <option value="vanilla">vanilla</option>
              <option value="with-sentences">with-sentences</option>
              <option value="only-sentences">only-sentences</option>
            </select>
          </label>
          <label>seed <input id="seed" type="number" value="0"></label>
          <label><input id="filter-enabled" type="checkbox" checked> LLM filter</label>
          <button id="submit">Ask</button>
        </div>
      </section>
      <section class="answer-panel">
        <h2>Answer</h2>
        <pre id="answer"></pre>
      </section>
      <section class="trace-panel">
        <h2>Trace</h2>
        <div id="trace-summary"></div>
        <ul id="trace-terms"></ul>
        <div id="evidence"></div>
        <div id="trace-flags"></div>
      </section>
      <section class="explorer">
        <h2>Graph explorer</h2>
        <div class="controls">
          <input id="explore-node" placeholder="node id, e.g. clutch-disc">
          <button id="explore-btn">Explore</button>
        </div>
        <ol id="breadcrumb"></ol>
        <div id="neighborhood"></div>
      </section>
      <section class="history-panel">
        <h2>History</h2>
        <ol id="history"></ol>
      </section>
    `;
    return container;
  }

  private query<T extends HTMLElement>(selector: string): T {
    const node = this.root.querySelector<T>(selector);
    if (!node) {
      throw new Error(`missing element ${selector}`);
    }
    return node;
  }

  private wire(): void {
    this.query<HTMLButtonElement>("#submit").addEventListener("click", () => {
      void this.submit();
    });
    this.query<HTMLButtonElement>("#explore-btn").addEventListener("click", () => {
      const node = this.query<HTMLInputElement>("#explore-node").value.trim();
      if (node) {
        void this.explore(node);
      }
    });
  }

  // ----- querying ----------------------------------------------------------

  buildRequest(): QueryRequest {
    const question = this.query<HTMLTextAreaElement>("#question").value;
    this.state.setQuestion(question);
    const request: QueryRequest = {
      question,
      variant: this.query<HTMLSelectElement>("#variant").value,
      filter_enabled: this.query<HTMLInputElement>("#filter-enabled").checked,
    };
    const seedRaw = this.query<HTMLInputElement>("#seed").value.trim();
    if (seedRaw !== "") {
      request.seed = Number(seedRaw);
    }
    if (this.state.includeIds.size) {
      request.include_ids = [...this.state.includeIds].sort((a, b) => a - b);
    }
    if (this.state.excludeIds.size) {
      request.exclude_ids = [...this.state.excludeIds].sort((a, b) => a - b);
    }
    return request;
  }

  async submit(): Promise<void> {
    if (this.inFlight) {
      return;
    }
    const request = this.buildRequest();
    const button = this.query<HTMLButtonElement>("#submit");
    this.inFlight = true;
    button.disabled = true;
    try {
      const response = await this.api.query(request);
      this.state.recordResponse(response);
      this.hideError();
      this.renderResponse(response);
      this.renderHistory();
    } catch (error) {
      this.showError(error);
    } finally {
      this.inFlight = false;
      button.disabled = false;
    }
  }

  private renderResponse(response: QueryResponse): void {
    this.query<HTMLPreElement>("#answer").textContent = response.answer;
    this.renderTrace(response.trace);
    this.renderEvidence(response);
  }

  private renderTrace(trace: TraceJson): void {
    const summary = this.query<HTMLDivElement>("#trace-summary");
    summary.innerHTML = "";
    const rows: [string, string][] = [
      ["extracted sub-graphs", String(trace.extracted_ids.length)],
      ["filter kept", idList(trace.kept_ids)],
      ["after overrides", idList(trace.override_ids)],
      ["evicted by budget", idList(trace.evicted_ids)],
      ["in final prompt", idList(trace.final_ids)],
      ["sentences used", String(trace.sentences_used.length)],
      ["seed", String(trace.seed)],
    ];
    for (const [label, value] of rows) {
      const row = el("div", { class: "trace-row" });
      row.appendChild(el("span", { class: "trace-label" }, label));
      row.appendChild(el("span", { class: `trace-value trace-${label.replace(/ /g, "-")}` }, value));
      summary.appendChild(row);
    }

    const terms = this.query<HTMLUListElement>("#trace-terms");
    terms.innerHTML = "";
    for (const term of trace.terms) {
      const matched = trace.matched_terms.includes(term);
      terms.appendChild(
        el("li", { class: matched ? "term matched" : "term unmatched" }, term),
      );
    }

    const flags = this.query<HTMLDivElement>("#trace-flags");
    flags.textContent = trace.flags.length ? `flags: ${trace.flags.join(", ")}` : "";
  }

  private renderEvidence(response: QueryResponse): void {
    const evidence = this.query<HTMLDivElement>("#evidence");
    evidence.innerHTML = "";
    const ids = Object.keys(response.subgraphs)
      .map(Number)
      .sort((a, b) => a - b);
    for (const id of ids) {
      const details = el("details", { class: "block", "data-id": String(id) });
      const kept = response.trace.kept_ids.includes(id);
      details.appendChild(
        el("summary", {}, `sub-graph ${id}${kept ? "" : " (filtered out)"}`),
      );
      details.appendChild(el("pre", {}, response.subgraphs[String(id)]));
      // Kept blocks can be excluded; filtered-out blocks can be forced back in.
      const label = el("label", { class: "override" });
      const toggle = el("input", {
        type: "checkbox",
        class: kept ? "exclude-toggle" : "include-toggle",
      });
      toggle.checked = kept
        ? this.state.excludeIds.has(id)
        : this.state.includeIds.has(id);
      toggle.addEventListener("change", () => {
        if (kept) {
          this.state.toggleExclude(id);
        } else {
          this.state.toggleInclude(id);
        }
      });
      label.appendChild(toggle);
      label.appendChild(
        document.createTextNode(kept ? " exclude from evidence" : " include anyway"),
      );
      details.appendChild(label);
      evidence.appendChild(details);
    }
  }

  private renderHistory(): void {
    const history = this.query<HTMLOListElement>("#history");
    history.innerHTML = "";
    for (const turn of this.state.history) {
      const item = el("li", {});
      item.appendChild(el("span", { class: "history-q" }, turn.question));
      item.appendChild(el("span", { class: "history-a" }, turn.answer));
      history.appendChild(item);
    }
  }

  // ----- explorer ----------------------------------------------------------

  async explore(nodeId: string, recenter = false): Promise<void> {
    let response: NeighborsResponse;
    try {
      response = await this.api.neighbors(nodeId);
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.query<HTMLDivElement>("#neighborhood").textContent =
          `unknown node: ${nodeId}`;
        return;
      }
      this.showError(error);
      return;
    }
    if (!recenter) {
      this.breadcrumb = [];
    }
    this.breadcrumb.push(nodeId);
    this.renderBreadcrumb();
    this.renderNeighborhood(response);
  }

  private renderBreadcrumb(): void {
    const breadcrumb = this.query<HTMLOListElement>("#breadcrumb");
    breadcrumb.innerHTML = "";
    for (const node of this.breadcrumb) {
      breadcrumb.appendChild(el("li", {}, node));
    }
  }

  private renderNeighborhood(response: NeighborsResponse): void {
    const container = this.query<HTMLDivElement>("#neighborhood");
    container.innerHTML = "";
    container.appendChild(
      el("h3", {}, `${response.label} (${response.node})`),
    );
    if (!response.edges.length) {
      container.appendChild(el("p", { class: "placeholder" }, "no relations"));
      return;
    }
    const byRelation = new Map<string, typeof response.edges>();
    for (const edge of response.edges) {
      const group = byRelation.get(edge.relation) ?? [];
      group.push(edge);
      byRelation.set(edge.relation, group);
    }
    for (const relation of [...byRelation.keys()].sort()) {
      const group = el("div", { class: "relation-group", "data-relation": relation });
      group.appendChild(el("h4", {}, relation));
      const list = el("ul", {});
      for (const edge of byRelation.get(relation)!) {
        const item = el("li", { class: "edge-row" });
        const far = edge.src === response.node ? edge.dst : edge.src;
        item.appendChild(el("span", {}, `${edge.src} → ${edge.dst} `));
        const jump = el("button", { class: "neighbor", "data-node": far }, far);
        jump.addEventListener("click", () => {
          void this.explore(far, true);
        });
        item.appendChild(jump);
        list.appendChild(item);
      }
      group.appendChild(list);
      container.appendChild(group);
    }
  }

  // ----- status ------------------------------------------------------------

  private async refreshHealth(): Promise<void> {
    const badge = this.query<HTMLSpanElement>("#health-badge");
    try {
      const health = await this.api.health();
      const stats = health.graph_stats;
      badge.textContent =
        `${health.backend_kind} backend, ${stats.nodes} nodes / ${stats.edges} edges`;
      badge.className = "badge ok";
    } catch {
      badge.textContent = "service unreachable";
      badge.className = "badge down";
    }
  }

  private showError(error: unknown): void {
    const banner = this.query<HTMLDivElement>("#error-banner");
    if (error instanceof ApiError) {
      const stage = error.stage();
      banner.textContent = stage
        ? `stage ${stage} failed - ${error.body}`
        : `HTTP ${error.status} - ${error.body}`;
    } else {
      banner.textContent = String(error);
    }
    banner.classList.remove("hidden");
  }

  private hideError(): void {
    this.query<HTMLDivElement>("#error-banner").classList.add("hidden");
  }
}
