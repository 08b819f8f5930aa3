import { readFileSync } from "node:fs";
import { resolve } from "node:path";

// vitest runs with the package root as cwd; happy-dom rewrites
// import.meta.url, so resolve fixtures from the filesystem instead.
export function fixtureText(name: string): string {
  return readFileSync(resolve(process.cwd(), "tests", "fixtures", name), "utf-8");
}

export function fixture<T>(name: string): T {
  return JSON.parse(fixtureText(name)) as T;
}

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

export interface StubbedFetch {
  calls: RecordedCall[];
  fetch: typeof fetch;
}

function response(status: number, text: string) {
  return {
    ok: status >= 200 && status < 300,
    status,
    text: async () => text,
  } as Response;
}

/**
 * Fetch stub replaying the captured service bodies: base query, query with
 * exclusions, two neighborhoods, health. Anything else 404s.
 */
export function serviceFetchStub(): StubbedFetch {
  const meta = fixture<{
    explore_node: string;
    recenter_node: string;
    isolated_node: string;
    filtered_question: string;
  }>("meta.json");
  const calls: RecordedCall[] = [];

  const stub = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = String(input);
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    calls.push({ url, method, body });

    if (url.endsWith("/api/health")) {
      return response(200, fixtureText("health.json"));
    }
    if (url.includes("/api/query")) {
      const includes = Array.isArray(body?.include_ids) && body.include_ids.length > 0;
      const excludes = Array.isArray(body?.exclude_ids) && body.exclude_ids.length > 0;
      let name: string;
      if (body?.question === meta.filtered_question) {
        name = includes ? "query_included.json" : "query_filtered_out.json";
      } else {
        name = excludes ? "query_excluded.json" : "query_base.json";
      }
      return response(200, fixtureText(name));
    }
    if (url.includes("/api/graph/neighbors")) {
      const node = new URL(url).searchParams.get("node");
      if (node === meta.explore_node) {
        return response(200, fixtureText("neighbors_clutch_disc.json"));
      }
      if (node === meta.recenter_node) {
        return response(200, fixtureText("neighbors_recenter.json"));
      }
      if (node === meta.isolated_node) {
        return response(200, fixtureText("neighbors_isolated.json"));
      }
      return response(404, JSON.stringify({ error: `unknown node '${node}'` }));
    }
    return response(404, JSON.stringify({ error: "no such endpoint" }));
  };

  return { calls, fetch: stub as typeof fetch };
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
