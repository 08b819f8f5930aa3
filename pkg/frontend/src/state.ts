import type { QueryResponse } from "./types";

export interface HistoryTurn {
  question: string;
  answer: string;
}

/**
 * Client-side session state. Include/exclude sets stay disjoint by
 * construction; history is append-only for the lifetime of the page.
 */
export class SessionState {
  question = "";
  lastResponse: QueryResponse | null = null;
  readonly includeIds = new Set<number>();
  readonly excludeIds = new Set<number>();
  readonly history: HistoryTurn[] = [];

  setQuestion(text: string): void {
    if (text !== this.question) {
      this.question = text;
      // Sub-graph ids are only meaningful per question.
      this.includeIds.clear();
      this.excludeIds.clear();
    }
  }

  toggleExclude(id: number): boolean {
    if (this.excludeIds.has(id)) {
      this.excludeIds.delete(id);
      return false;
    }
    this.includeIds.delete(id);
    this.excludeIds.add(id);
    return true;
  }

  toggleInclude(id: number): boolean {
    if (this.includeIds.has(id)) {
      this.includeIds.delete(id);
      return false;
    }
    this.excludeIds.delete(id);
    this.includeIds.add(id);
    return true;
  }

  recordResponse(response: QueryResponse): void {
    this.lastResponse = response;
    this.history.push({ question: this.question, answer: response.answer });
  }
}
