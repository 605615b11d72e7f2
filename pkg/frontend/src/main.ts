/** DOM wiring: renders only acked server state; every button maps to one
 * API call and re-renders from the response (no optimistic updates).
 */

import { ApiClient, ApiError } from "./api.js";
import { loadConfig } from "./config.js";
import { LiveFeed } from "./live.js";
import {
  alarmFeedRows,
  buildChannelViews,
  canComposeAdvice,
  canEditThresholds,
  formatTs,
  knowledgeRows,
  sparklinePath,
  validateBand,
} from "./model.js";
import type { ConsoleConfig, Session, VitalsPayload } from "./types.js";

const HISTORY_WINDOW_S = 600;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, cls?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

class Console {
  private api!: ApiClient;
  private config!: ConsoleConfig;
  private session!: Session;
  private subject: string | null = null;
  private feed: LiveFeed | null = null;
  private lastVitals: VitalsPayload = { records: [], thresholds: {} };

  async boot(): Promise<void> {
    this.config = await loadConfig();
    this.api = new ApiClient(this.config);
    try {
      this.session = await this.api.me();
    } catch (error) {
      this.renderDenial(error);
      return;
    }
    byId("who").textContent =
      `${this.session.user_id} (${this.session.role})`;
    const select = byId("subject") as HTMLSelectElement;
    select.innerHTML = "";
    for (const subject of this.session.subjects) {
      const option = el("option", undefined, subject);
      option.value = subject;
      select.appendChild(option);
    }
    select.onchange = () => this.openSubject(select.value);
    if (this.session.subjects.length > 0) {
      this.openSubject(this.session.subjects[0]!);
    } else {
      byId("vitals").textContent = "No subjects are visible to this account.";
    }
    this.wireKnowledge();
    this.wireThreads();
  }

  private renderDenial(error: unknown): void {
    const box = byId("app");
    box.innerHTML = "";
    const msg = error instanceof ApiError
      ? `Access denied (${error.status}): ${error.detail}`
      : `Cannot reach the server: ${String(error)}`;
    box.appendChild(el("div", "denial", msg));
  }

  private openSubject(subject: string): void {
    if (this.feed) this.feed.stop();
    this.subject = subject;
    void this.refreshSubject();
    this.feed = new LiveFeed(this.config, subject, {
      onItem: () => void this.refreshSubject(),
      onPoll: () => void this.refreshSubject(),
      pollIntervalMs: 2000,
    });
    this.feed.start();
  }

  private async refreshSubject(): Promise<void> {
    if (!this.subject) return;
    try {
      const [vitals, alarms] = await Promise.all([
        this.api.vitals(this.subject),
        this.api.alarms(this.subject),
      ]);
      this.lastVitals = vitals;
      this.renderVitals(vitals);
      this.renderAlarms(alarms);
    } catch (error) {
      this.showError("vitals-error", error);
    }
  }

  private renderVitals(vitals: VitalsPayload): void {
    const host = byId("vitals");
    host.innerHTML = "";
    const views = buildChannelViews(vitals.records, vitals.thresholds, HISTORY_WINDOW_S);
    for (const view of views) {
      const card = el("div", `channel state-${view.state}`);
      card.appendChild(el("h3", undefined, view.channel));
      card.appendChild(el(
        "div", "value",
        view.latest === null ? "no data" : `${view.latest} @ ${formatTs(view.latestTs!)}`,
      ));
      card.appendChild(el(
        "div", "band",
        view.band ? `band [${view.band.low}, ${view.band.high}]` : "no threshold set",
      ));
      card.appendChild(el("div", "badge", view.state));
      const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
      svg.setAttribute("viewBox", "0 0 240 48");
      svg.setAttribute("class", "spark");
      const path = document.createElementNS("http://www.w3.org/2000/svg", "path");
      path.setAttribute("d", sparklinePath(view.history, 240, 48));
      path.setAttribute("fill", "none");
      path.setAttribute("stroke", "currentColor");
      svg.appendChild(path);
      card.appendChild(svg);
      if (canEditThresholds(this.session)) {
        card.appendChild(this.thresholdEditor(view.channel, view.band));
      }
      host.appendChild(card);
    }
    const advice = byId("advice-box");
    advice.style.display = canComposeAdvice(this.session) ? "" : "none";
    this.wireAdvice();
  }

  private thresholdEditor(
    channel: string, band: { low: number; high: number } | null,
  ): HTMLElement {
    const form = el("div", "editor");
    const low = el("input") as HTMLInputElement;
    const high = el("input") as HTMLInputElement;
    low.value = band ? String(band.low) : "";
    high.value = band ? String(band.high) : "";
    low.placeholder = "low";
    high.placeholder = "high";
    const button = el("button", undefined, "set band");
    const note = el("span", "note", "");
    button.onclick = async () => {
      const lo = Number(low.value);
      const hi = Number(high.value);
      const problem = validateBand(lo, hi);
      if (problem !== null) {
        note.textContent = problem; // invalid: no request is sent
        return;
      }
      try {
        const ack = await this.api.putThreshold(this.subject!, channel, lo, hi);
        note.textContent = `ack [${ack.low}, ${ack.high}]`;
        await this.refreshSubject(); // band overlay comes from the server
      } catch (error) {
        note.textContent = error instanceof ApiError
          ? `${error.status}: ${error.detail}` : String(error);
      }
    };
    form.append(low, high, button, note);
    return form;
  }

  private renderAlarms(alarms: { kind: string; ts: number; detail: string }[]): void {
    const host = byId("alarms");
    host.innerHTML = "";
    if (alarms.length === 0) {
      host.appendChild(el("div", "empty", "no alarm events"));
      return;
    }
    for (const row of alarmFeedRows(alarms)) {
      const item = el("div", `alarm ${row.kind}`);
      item.appendChild(el("span", "ts", formatTs(row.ts)));
      item.appendChild(el("span", "kind", row.kind));
      item.appendChild(el("span", "detail", row.detail));
      host.appendChild(item);
    }
  }

  private wireAdvice(): void {
    const button = byId("advice-send") as HTMLButtonElement;
    button.onclick = async () => {
      const input = byId("advice-text") as HTMLInputElement;
      const note = byId("advice-note");
      if (!input.value || !this.subject) return;
      try {
        await this.api.postAdvice(this.subject, input.value);
        note.textContent = "sent";
        input.value = "";
        await this.refreshSubject();
      } catch (error) {
        note.textContent = error instanceof ApiError
          ? `${error.status}: ${error.detail}` : String(error);
      }
    };
  }

  private wireKnowledge(): void {
    const button = byId("kb-search") as HTMLButtonElement;
    button.onclick = async () => {
      const keyword = (byId("kb-keyword") as HTMLInputElement).value;
      const area = (byId("kb-area") as HTMLInputElement).value;
      const minLevel = (byId("kb-level") as HTMLSelectElement).value as "credit" | "general";
      const host = byId("kb-results");
      host.innerHTML = "";
      try {
        const entries = await this.api.searchKnowledge(keyword, area, minLevel);
        // rendered in server order, badges as served
        for (const row of knowledgeRows(entries)) {
          const item = el("div", "kb-entry");
          item.appendChild(el("span", `level level-${row.badge}`, row.badge));
          item.appendChild(el("span", "score", row.score.toFixed(4)));
          item.appendChild(el("span", "body", row.body));
          item.appendChild(el("span", "meta", `${row.area} | ${row.keywords}`));
          host.appendChild(item);
        }
        if (entries.length === 0) host.appendChild(el("div", "empty", "no results"));
      } catch (error) {
        host.appendChild(el("div", "error", error instanceof ApiError
          ? `${error.status}: ${error.detail}` : String(error)));
      }
    };
  }

  private wireThreads(): void {
    const loadButton = byId("thread-load") as HTMLButtonElement;
    const postButton = byId("thread-post") as HTMLButtonElement;
    const render = (thread: { messages: { author: string; ts: number; text: string }[] }) => {
      const host = byId("thread-messages");
      host.innerHTML = "";
      for (const message of thread.messages) {
        const item = el("div", "message");
        item.appendChild(el("span", "author", message.author));
        item.appendChild(el("span", "ts", formatTs(message.ts)));
        item.appendChild(el("span", "text", message.text));
        host.appendChild(item);
      }
    };
    loadButton.onclick = async () => {
      const threadId = (byId("thread-id") as HTMLInputElement).value;
      try {
        render(await this.api.readThread(threadId));
        byId("thread-note").textContent = "";
      } catch (error) {
        byId("thread-note").textContent = error instanceof ApiError
          ? `${error.status}: ${error.detail}` : String(error);
      }
    };
    postButton.onclick = async () => {
      const threadId = (byId("thread-id") as HTMLInputElement).value;
      const text = (byId("thread-text") as HTMLInputElement).value;
      if (!text) return;
      try {
        await this.api.postMessage(threadId, text);
        (byId("thread-text") as HTMLInputElement).value = "";
        render(await this.api.readThread(threadId)); // re-render acked state
      } catch (error) {
        byId("thread-note").textContent = error instanceof ApiError
          ? `${error.status}: ${error.detail}` : String(error);
      }
    };
  }

  private showError(id: string, error: unknown): void {
    const host = document.getElementById(id);
    if (host) {
      host.textContent = error instanceof ApiError
        ? `${error.status}: ${error.detail}` : String(error);
    }
  }
}

void new Console().boot();
