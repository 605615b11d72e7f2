import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function clientWith(responses: Response[], calls: { url: string; init?: RequestInit }[]) {
  const fetchFn = vi.fn(async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const next = responses.shift();
    if (!next) throw new Error("unexpected extra request");
    return next;
  });
  return new ApiClient({ apiBase: "http://api", token: "tok-D01" }, fetchFn);
}

describe("ApiClient", () => {
  it("sends the bearer token on every request", async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const api = clientWith([jsonResponse({ user_id: "D01", role: "doctor", name: "", subjects: [] })], calls);
    await api.me();
    expect(calls[0]!.url).toBe("http://api/me");
    const headers = calls[0]!.init!.headers as Record<string, string>;
    expect(headers.Authorization).toBe("Bearer tok-D01");
  });

  it("threshold edit is exactly one PUT with the band body", async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const api = clientWith([jsonResponse({ channel: "ECG_HR", low: 50, high: 100 })], calls);
    await api.putThreshold("E01", "ECG_HR", 50, 100);
    expect(calls).toHaveLength(1);
    expect(calls[0]!.url).toBe("http://api/subjects/E01/thresholds/ECG_HR");
    expect(calls[0]!.init!.method).toBe("PUT");
    expect(JSON.parse(String(calls[0]!.init!.body))).toEqual({ low: 50, high: 100 });
  });

  it("surfaces server errors verbatim with their status", async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const api = clientWith(
      [jsonResponse({ detail: "D02 is not assigned to E01" }, 403)], calls);
    const failure = await api.putThreshold("E01", "ECG_HR", 50, 100).catch((e) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect(failure.status).toBe(403);
    expect(failure.detail).toBe("D02 is not assigned to E01");
  });

  it("knowledge search passes keyword, area and min_level through", async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const api = clientWith([jsonResponse({ entries: [] })], calls);
    await api.searchKnowledge("stroke", "neurology", "credit");
    const url = new URL(calls[0]!.url);
    expect(url.pathname).toBe("/knowledge");
    expect(url.searchParams.get("keyword")).toBe("stroke");
    expect(url.searchParams.get("area")).toBe("neurology");
    expect(url.searchParams.get("min_level")).toBe("credit");
  });

  it("returns knowledge entries exactly as served, order untouched", async () => {
    const served = [
      { entry_id: "K0002", score: 0.5, level: "general", body: "b", keywords: [], area: "", author: "", created_ts: 0, evaluations: 0, feedback_delta: 0 },
      { entry_id: "K0001", score: 0.9, level: "credit", body: "a", keywords: [], area: "", author: "", created_ts: 0, evaluations: 0, feedback_delta: 0 },
    ];
    const calls: { url: string; init?: RequestInit }[] = [];
    // deliberately "wrong" order: the client must not re-rank
    const api = clientWith([jsonResponse({ entries: served })], calls);
    const entries = await api.searchKnowledge("kw", "", "general");
    expect(entries.map((e) => e.entry_id)).toEqual(["K0002", "K0001"]);
  });

  it("vitals accepts a since filter", async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const api = clientWith([jsonResponse({ records: [], thresholds: {} })], calls);
    await api.vitals("E01", 120);
    expect(calls[0]!.url).toBe("http://api/subjects/E01/vitals?since=120");
  });

  it("non-JSON error bodies fall back to status text", async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const api = clientWith(
      [new Response("boom", { status: 500, statusText: "Internal Server Error" })],
      calls);
    const failure = await api.me().catch((e) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect(failure.status).toBe(500);
  });
});
