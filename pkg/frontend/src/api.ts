/** Thin, faithful client of the server API.
 *
 * Every mutating console action maps to exactly one call here; responses
 * are returned as received, never reordered or recomputed.  Errors carry
 * the HTTP status and the server's detail text verbatim.
 */

import type {
  AlarmEvent,
  ConsoleConfig,
  DispatchRecord,
  KnowledgeEntry,
  Session,
  Thread,
  ThreadMessage,
  VitalsPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
    public readonly path: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private fetchFn: FetchLike;

  constructor(
    private readonly config: ConsoleConfig,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.config.apiBase + path, {
      method,
      headers: {
        Authorization: `Bearer ${this.config.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let detail = response.statusText || `HTTP ${response.status}`;
      try {
        const payload = (await response.json()) as { detail?: unknown };
        if (payload && payload.detail !== undefined) detail = String(payload.detail);
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(response.status, detail, path);
    }
    return (await response.json()) as T;
  }

  me(): Promise<Session> {
    return this.request<Session>("GET", "/me");
  }

  vitals(subject: string, since?: number): Promise<VitalsPayload> {
    const query = since !== undefined ? `?since=${encodeURIComponent(since)}` : "";
    return this.request<VitalsPayload>("GET", `/subjects/${subject}/vitals${query}`);
  }

  alarms(subject: string): Promise<AlarmEvent[]> {
    return this.request<{ alarms: AlarmEvent[] }>("GET", `/subjects/${subject}/alarms`)
      .then((body) => body.alarms);
  }

  putThreshold(subject: string, channel: string, low: number, high: number) {
    return this.request<{ channel: string; low: number; high: number }>(
      "PUT", `/subjects/${subject}/thresholds/${channel}`, { low, high });
  }

  postAdvice(subject: string, text: string) {
    return this.request<{ text: string; ts: number }>(
      "POST", `/subjects/${subject}/advice`, { text });
  }

  searchKnowledge(keyword: string, area: string, minLevel: "credit" | "general") {
    const query = new URLSearchParams({ keyword, area, min_level: minLevel });
    return this.request<{ entries: KnowledgeEntry[] }>(
      "GET", `/knowledge?${query.toString()}`).then((body) => body.entries);
  }

  addKnowledge(keywords: string[], area: string, body: string) {
    return this.request<KnowledgeEntry>("POST", "/knowledge", { keywords, area, body });
  }

  evaluateKnowledge(entryId: string, rating: 0 | 0.5 | 1) {
    return this.request<KnowledgeEntry>(
      "POST", `/knowledge/${entryId}/evaluate`, { rating });
  }

  sendFeedback(entryId: string, verdict: "helpful" | "unhelpful") {
    return this.request<KnowledgeEntry>(
      "POST", `/knowledge/${entryId}/feedback`, { verdict });
  }

  openThread(participants: string[]) {
    return this.request<{ thread_id: string }>("POST", "/threads", { participants });
  }

  postMessage(threadId: string, text: string): Promise<ThreadMessage> {
    return this.request<ThreadMessage>("POST", `/threads/${threadId}/messages`, { text });
  }

  readThread(threadId: string): Promise<Thread> {
    return this.request<Thread>("GET", `/threads/${threadId}`);
  }

  dispatches(elderId?: string): Promise<DispatchRecord[]> {
    const query = elderId ? `?elder_id=${encodeURIComponent(elderId)}` : "";
    return this.request<{ dispatches: DispatchRecord[] }>("GET", `/dispatches${query}`)
      .then((body) => body.dispatches);
  }

  healthz(): Promise<{ status: string }> {
    return this.request<{ status: string }>("GET", "/healthz");
  }
}
