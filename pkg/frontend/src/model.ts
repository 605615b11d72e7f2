/** Pure view-model builders.
 *
 * The console is stateless with respect to domain rules: these helpers
 * group and format what the server sent, but never re-rank knowledge
 * results, never recompute confidence levels, and never invent values
 * that were not in an API payload.
 */

import type {
  AlarmEvent,
  KnowledgeEntry,
  Session,
  Thresholdband,
  VitalRecord,
} from "./types.js";

export const CHANNELS = ["ECG_HR", "SYS_BP", "DIA_BP", "ACTIVITY"] as const;

export interface ChannelView {
  channel: string;
  latest: number | null;
  latestTs: number | null;
  band: { low: number; high: number } | null;
  state: "ok" | "out" | "no-band" | "no-data";
  history: { ts: number; value: number }[];
}

export function buildChannelViews(
  records: VitalRecord[],
  thresholds: Record<string, Thresholdband>,
  windowS: number,
): ChannelView[] {
  const latestTs = records.reduce((acc, r) => Math.max(acc, r.ts), 0);
  const cutoff = latestTs - windowS;
  const views: ChannelView[] = [];
  const channels = new Set<string>(CHANNELS);
  for (const record of records) channels.add(record.channel);
  for (const channel of channels) {
    const mine = records
      .filter((r) => r.channel === channel)
      .sort((a, b) => a.ts - b.ts || a.seq - b.seq);
    if (mine.length === 0 && !(channel in thresholds)) continue;
    const history = mine.filter((r) => r.ts >= cutoff)
      .map((r) => ({ ts: r.ts, value: r.value }));
    const last = mine.length > 0 ? mine[mine.length - 1]! : null;
    const band = channel in thresholds
      ? { low: thresholds[channel]!.low, high: thresholds[channel]!.high }
      : null;
    let state: ChannelView["state"];
    if (last === null) state = "no-data";
    else if (band === null) state = "no-band";
    else state = last.value < band.low || last.value > band.high ? "out" : "ok";
    views.push({
      channel,
      latest: last ? last.value : null,
      latestTs: last ? last.ts : null,
      band,
      state,
      history,
    });
  }
  views.sort((a, b) => a.channel.localeCompare(b.channel));
  return views;
}

/** SVG path for a fixed-size sparkline; empty string when < 2 points. */
export function sparklinePath(
  history: { ts: number; value: number }[],
  width: number,
  height: number,
): string {
  if (history.length < 2) return "";
  const t0 = history[0]!.ts;
  const t1 = history[history.length - 1]!.ts;
  const values = history.map((p) => p.value);
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const spanT = Math.max(1, t1 - t0);
  const spanV = Math.max(1e-9, hi - lo);
  return history
    .map((p, i) => {
      const x = ((p.ts - t0) / spanT) * width;
      const y = height - ((p.value - lo) / spanV) * height;
      return `${i === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

export interface KnowledgeRow {
  entryId: string;
  body: string;
  area: string;
  keywords: string;
  score: number;
  badge: string; // the server's level, displayed as received
}

/** Rows in precisely the order the server returned them. */
export function knowledgeRows(entries: KnowledgeEntry[]): KnowledgeRow[] {
  return entries.map((entry) => ({
    entryId: entry.entry_id,
    body: entry.body,
    area: entry.area,
    keywords: entry.keywords.join(", "),
    score: entry.score,
    badge: entry.level,
  }));
}

export function canEditThresholds(session: Pick<Session, "role">): boolean {
  return session.role === "doctor";
}

export function canComposeAdvice(session: Pick<Session, "role">): boolean {
  return session.role === "doctor";
}

/** Client-side band check mirroring the server's validation; returns an
 * error message or null when the pair may be submitted. */
export function validateBand(low: number, high: number): string | null {
  if (!Number.isFinite(low) || !Number.isFinite(high)) {
    return "low and high must be numbers";
  }
  if (low > high) return "low must not exceed high";
  return null;
}

export interface AlarmRow {
  ts: number;
  kind: string;
  detail: string;
}

/** Alarm feed rows, as served (server sends newest first). */
export function alarmFeedRows(alarms: AlarmEvent[]): AlarmRow[] {
  return alarms.map((a) => ({ ts: a.ts, kind: a.kind, detail: a.detail }));
}

/** Reconnect backoff: 1s, 2s, 4s ... capped at 30s. */
export function reconnectDelayMs(attempt: number): number {
  return Math.min(30_000, 1000 * 2 ** Math.max(0, attempt));
}

export function formatTs(ts: number): string {
  if (ts > 10_000_000) return new Date(ts * 1000).toISOString().replace("T", " ").slice(0, 19);
  return `t+${ts}s`;
}
