/**
 * Console state: a pure reducer over control-plane messages.
 *
 * Invariants: state derives solely from messages received (a fresh
 * connection reconstructs everything from the roster/gain_state/stats
 * snapshot), and every user action maps to exactly one control message.
 * Fader positions always show the server-confirmed value, never the
 * optimistic one.
 */

import {
  ClientStats,
  ConsoleMsg,
  ErrorMsg,
  GainStateMsg,
  RosterEntry,
  RosterMsg,
  ServerMsg,
  SetGainMsg,
  StatsMsg,
  clampGain,
  formatDb,
} from "./protocol.js";
import { RttHealth, rttHealth } from "./monitor.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface FaderRow {
  sourceId: number;
  name: string;
  section: string;
  role: string;
  gain: number | null; // server-confirmed; null until the snapshot arrives
  dbLabel: string;
  muted: boolean;
  pending: boolean; // a set_gain is in flight, awaiting the echo
}

export interface MonitorRow {
  clientId: number;
  name: string;
  section: string;
  rttMs: number | null;
  health: RttHealth;
  lost: number;
  concealed: number;
}

export interface SectionGroup<T> {
  section: string;
  rows: T[];
}

const SECTION_ORDER = [
  "conductor",
  "soprano",
  "alto",
  "tenor",
  "bass",
  "listener",
];

function sectionRank(section: string): number {
  const i = SECTION_ORDER.indexOf(section);
  return i === -1 ? SECTION_ORDER.length : i;
}

export class ConsoleStore {
  connection: ConnectionStatus = "connecting";
  ownClientId: number | null = null;
  roster: RosterEntry[] = [];
  stats: Map<number, ClientStats> = new Map();
  lastStatsAtMs: Map<number, number> = new Map();
  toasts: string[] = [];
  private gains: Map<string, number> = new Map(); // "listener:source" -> gain
  private pending: Set<string> = new Set();

  private key(listenerId: number, sourceId: number): string {
    return `${listenerId}:${sourceId}`;
  }

  /** Bind the console to the member whose fader rows it may edit. */
  hello(clientId: number | null): ConsoleMsg {
    this.ownClientId = clientId;
    return clientId === null
      ? { type: "console_hello" }
      : { type: "console_hello", client_id: clientId };
  }

  applyServer(msg: ServerMsg, nowMs: number): void {
    switch (msg.type) {
      case "roster":
        this.applyRoster(msg);
        break;
      case "gain_state":
        this.applyGainState(msg);
        break;
      case "stats":
        this.applyStats(msg, nowMs);
        break;
      case "error":
        this.applyError(msg);
        break;
    }
  }

  private applyRoster(msg: RosterMsg): void {
    this.roster = [...msg.clients];
    const ids = new Set(msg.clients.map((c) => c.client_id));
    for (const key of [...this.gains.keys()]) {
      const [l, s] = key.split(":").map(Number);
      if (!ids.has(l) || !ids.has(s)) this.gains.delete(key);
    }
    for (const id of [...this.stats.keys()]) {
      if (!ids.has(id)) {
        this.stats.delete(id);
        this.lastStatsAtMs.delete(id);
      }
    }
  }

  private applyGainState(msg: GainStateMsg): void {
    const key = this.key(msg.listener_id, msg.source_id);
    this.gains.set(key, msg.gain);
    this.pending.delete(key);
  }

  private applyStats(msg: StatsMsg, nowMs: number): void {
    for (const entry of msg.clients) {
      this.stats.set(entry.client_id, entry);
      this.lastStatsAtMs.set(entry.client_id, nowMs);
    }
  }

  private applyError(msg: ErrorMsg): void {
    this.toasts.push(`${msg.code}: ${msg.message}`);
  }

  /** One user action -> exactly one control message (or a local error). */
  setFader(sourceId: number, gain: number): SetGainMsg {
    if (this.ownClientId === null) {
      throw new Error("console is not bound to a client");
    }
    const clamped = clampGain(gain);
    const msg: SetGainMsg = {
      type: "set_gain",
      listener_id: this.ownClientId,
      source_id: sourceId,
      gain: clamped,
    };
    this.pending.add(this.key(msg.listener_id, sourceId));
    return msg;
  }

  /** Conductor path: edit another listener's row. */
  setFaderFor(listenerId: number, sourceId: number, gain: number): SetGainMsg {
    const clamped = clampGain(gain);
    this.pending.add(this.key(listenerId, sourceId));
    return {
      type: "set_gain",
      listener_id: listenerId,
      source_id: sourceId,
      gain: clamped,
    };
  }

  confirmedGain(listenerId: number, sourceId: number): number | null {
    return this.gains.get(this.key(listenerId, sourceId)) ?? null;
  }

  popToast(): string | undefined {
    return this.toasts.shift();
  }

  /** Fader rows of the bound client's personal mix, grouped by section. */
  faderGroups(): SectionGroup<FaderRow>[] {
    const listenerId = this.ownClientId;
    const rows: FaderRow[] = this.roster
      .filter((c) => c.role !== "listener")
      .map((c) => {
        const gain =
          listenerId === null ? null : this.confirmedGain(listenerId, c.client_id);
        return {
          sourceId: c.client_id,
          name: c.name,
          section: c.section,
          role: c.role,
          gain,
          dbLabel: gain === null ? "—" : formatDb(gain),
          muted: gain === 0,
          pending:
            listenerId !== null &&
            this.pending.has(this.key(listenerId, c.client_id)),
        };
      });
    return groupBySection(rows, (r) => r.section);
  }

  monitorGroups(nowMs: number): SectionGroup<MonitorRow>[] {
    const rows: MonitorRow[] = this.roster.map((c) => {
      const stats = this.stats.get(c.client_id);
      const at = this.lastStatsAtMs.get(c.client_id);
      const age = at === undefined ? Number.POSITIVE_INFINITY : nowMs - at;
      const rtt = stats?.rtt_ms ?? null;
      return {
        clientId: c.client_id,
        name: c.name,
        section: c.section,
        rttMs: rtt,
        health: rttHealth(rtt, age),
        lost: stats?.jitter_buffer?.lost ?? 0,
        concealed: stats?.jitter_buffer?.concealed ?? 0,
      };
    });
    return groupBySection(rows, (r) => r.section);
  }
}

function groupBySection<T>(
  rows: T[],
  sectionOf: (row: T) => string,
): SectionGroup<T>[] {
  const bySection = new Map<string, T[]>();
  for (const row of rows) {
    const section = sectionOf(row);
    if (!bySection.has(section)) bySection.set(section, []);
    bySection.get(section)!.push(row);
  }
  return [...bySection.entries()]
    .sort((a, b) => sectionRank(a[0]) - sectionRank(b[0]))
    .map(([section, groupRows]) => ({ section, rows: groupRows }));
}
