/**
 * Control-plane message documents, exactly as carried on the server's
 * reliable channel and its browser socket endpoint.  The console consumes
 * and produces these verbatim; it never touches the audio plane.
 */

export type Role = "performer" | "conductor" | "listener";

export interface RosterEntry {
  client_id: number;
  name: string;
  section: string;
  role: Role;
}

export interface RosterMsg {
  type: "roster";
  clients: RosterEntry[];
}

export interface GainStateMsg {
  type: "gain_state";
  listener_id: number;
  source_id: number;
  gain: number;
}

export interface JitterCounters {
  received: number;
  late: number;
  lost: number;
  duplicate: number;
  overflow: number;
  concealed: number;
}

export interface ClientStats {
  client_id: number;
  name: string;
  section: string;
  rtt_ms: number | null;
  jitter_buffer: JitterCounters | null;
}

export interface StatsMsg {
  type: "stats";
  clients: ClientStats[];
  counters?: Record<string, number>;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  message: string;
}

export interface SetGainMsg {
  type: "set_gain";
  listener_id: number;
  source_id: number;
  gain: number;
}

export interface ConsoleHelloMsg {
  type: "console_hello";
  client_id?: number;
}

export type ServerMsg = RosterMsg | GainStateMsg | StatsMsg | ErrorMsg;
export type ConsoleMsg = SetGainMsg | ConsoleHelloMsg;

export const GAIN_MIN = 0.0;
export const GAIN_MAX = 4.0;

export function clampGain(gain: number): number {
  return Math.min(Math.max(gain, GAIN_MIN), GAIN_MAX);
}

/** Faders submit linear gain but display dB: 20*log10(g); 0 shows as muted. */
export function gainToDb(gain: number): number | null {
  if (gain <= 0) return null;
  return 20 * Math.log10(gain);
}

export function dbToGain(db: number): number {
  return clampGain(Math.pow(10, db / 20));
}

export function formatDb(gain: number): string {
  const db = gainToDb(gain);
  if (db === null) return "muted";
  const sign = db >= 0 ? "+" : "";
  return `${sign}${db.toFixed(1)} dB`;
}

/** Runtime validation of inbound documents (the socket is untyped JSON). */
export function parseServerMsg(raw: unknown): ServerMsg | null {
  if (typeof raw !== "object" || raw === null) return null;
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "roster":
      return Array.isArray(msg.clients) ? (raw as RosterMsg) : null;
    case "stats":
      return Array.isArray(msg.clients) ? (raw as StatsMsg) : null;
    case "gain_state":
      return typeof msg.listener_id === "number" &&
        typeof msg.source_id === "number" &&
        typeof msg.gain === "number"
        ? (raw as GainStateMsg)
        : null;
    case "error":
      return typeof msg.code === "string" && typeof msg.message === "string"
        ? (raw as ErrorMsg)
        : null;
    default:
      return null;
  }
}
