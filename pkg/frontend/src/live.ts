/** Live subject feed: one WebSocket subscription per open subject view,
 * reconnecting with exponential backoff, and a 2-second polling fallback
 * when WebSockets are unavailable or keep failing.
 */

import type { ConsoleConfig, LiveItem } from "./types.js";
import { reconnectDelayMs } from "./model.js";

export interface WebSocketLike {
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  close(): void;
}

export type WsFactory = (url: string) => WebSocketLike;

export interface LiveFeedOptions {
  onItem: (item: LiveItem) => void;
  /** called on each fallback poll tick; the owner refetches via the API */
  onPoll: () => void;
  wsFactory?: WsFactory | null;
  pollIntervalMs?: number;
  /** WS failures before giving up and polling instead */
  maxWsAttempts?: number;
}

export class LiveFeed {
  private ws: WebSocketLike | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private attempts = 0;
  private stopped = false;
  readonly pollIntervalMs: number;
  private readonly maxWsAttempts: number;
  private readonly wsFactory: WsFactory | null;

  constructor(
    private readonly config: ConsoleConfig,
    private readonly subject: string,
    private readonly options: LiveFeedOptions,
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 2000;
    this.maxWsAttempts = options.maxWsAttempts ?? 3;
    this.wsFactory = options.wsFactory === undefined ? defaultWsFactory() : options.wsFactory;
  }

  get mode(): "ws" | "poll" | "idle" {
    if (this.ws !== null) return "ws";
    if (this.pollTimer !== null) return "poll";
    return "idle";
  }

  start(): void {
    this.stopped = false;
    if (this.wsFactory === null) {
      this.startPolling();
      return;
    }
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.ws !== null) {
      const ws = this.ws;
      this.ws = null;
      ws.onclose = null;
      ws.close();
    }
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
  }

  private wsUrl(): string {
    const base = this.config.apiBase || (typeof location !== "undefined" ? location.origin : "");
    const wsBase = base.replace(/^http/, "ws");
    return `${wsBase}/subjects/${this.subject}/live?token=${encodeURIComponent(this.config.token)}`;
  }

  private connect(): void {
    if (this.stopped || this.wsFactory === null) return;
    let ws: WebSocketLike;
    try {
      ws = this.wsFactory(this.wsUrl());
    } catch {
      this.onWsFailure();
      return;
    }
    this.ws = ws;
    ws.onmessage = (ev) => {
      this.attempts = 0;
      try {
        this.options.onItem(JSON.parse(String(ev.data)) as LiveItem);
      } catch {
        // malformed push: ignore the frame, keep the stream
      }
    };
    ws.onerror = () => this.onWsFailure();
    ws.onclose = () => this.onWsFailure();
  }

  private onWsFailure(): void {
    if (this.ws !== null) {
      this.ws.onclose = null;
      this.ws.onerror = null;
      try {
        this.ws.close();
      } catch {
        // already closed
      }
      this.ws = null;
    }
    if (this.stopped) return;
    this.attempts += 1;
    if (this.attempts >= this.maxWsAttempts) {
      this.startPolling();
      return;
    }
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      this.connect();
    }, reconnectDelayMs(this.attempts - 1));
  }

  private startPolling(): void {
    if (this.pollTimer !== null || this.stopped) return;
    this.pollTimer = setInterval(() => this.options.onPoll(), this.pollIntervalMs);
  }
}

function defaultWsFactory(): WsFactory | null {
  if (typeof WebSocket === "undefined") return null;
  return (url) => new WebSocket(url) as unknown as WebSocketLike;
}
