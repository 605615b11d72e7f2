/** Payload shapes of the server API, mirrored as received. */

export interface ConsoleConfig {
  apiBase: string;
  token: string;
}

export interface Session {
  user_id: string;
  role: "elderly" | "doctor" | "family_friend" | "specialist";
  name: string;
  subjects: string[];
}

export interface VitalRecord {
  elder_id: string;
  sensor_id: string;
  channel: string;
  seq: number;
  ts: number;
  value: number;
}

export interface Thresholdband {
  low: number;
  high: number;
  set_by: string;
  ts: number;
}

export interface VitalsPayload {
  records: VitalRecord[];
  thresholds: Record<string, Thresholdband>;
}

export interface AlarmEvent {
  kind: string;
  ts: number;
  detail: string;
}

export interface KnowledgeEntry {
  entry_id: string;
  keywords: string[];
  area: string;
  body: string;
  author: string;
  created_ts: number;
  score: number;
  level: "credit" | "general" | "weak";
  evaluations: number;
  feedback_delta: number;
}

export interface ThreadMessage {
  author: string;
  ts: number;
  text: string;
}

export interface Thread {
  thread_id: string;
  participants: string[];
  messages: ThreadMessage[];
}

export interface DispatchRecord {
  dispatch_id: string;
  alarm_ts: number;
  elder_id: string;
  sensor_id: string;
  location: string;
  received_at: number;
  status: string;
}

/** One message from the live WebSocket push. */
export interface LiveItem {
  type: "vital" | "event" | "threshold";
  record?: VitalRecord;
  event?: AlarmEvent;
  channel?: string;
  low?: number;
  high?: number;
}
