/**
 * Socket lifecycle: connect, resync, reconnect with exponential backoff.
 *
 * On every (re)open the console announces itself and the server replays
 * the full roster/stats/gain snapshot, so a reconnect reconstructs state
 * from scratch — the console holds nothing the server cannot resend.
 */

import { ConsoleMsg, ServerMsg, parseServerMsg } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  // Handler slots are deliberately loose so both browser WebSocket and the
  // test double satisfy the shape.
  onopen: ((...args: never[]) => void) | null;
  onclose: ((...args: never[]) => void) | null;
  onmessage: ((event: never) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConnectionOptions {
  url: string;
  socketFactory: SocketFactory;
  onMessage: (msg: ServerMsg) => void;
  onStatus?: (status: "connecting" | "open" | "closed") => void;
  /** Sent immediately after every open (binding + snapshot request). */
  helloFactory: () => ConsoleMsg;
  backoffBaseMs?: number;
  backoffMaxMs?: number;
  schedule?: (fn: () => void, delayMs: number) => unknown;
}

export class ConsoleConnection {
  private socket: SocketLike | null = null;
  private attempts = 0;
  private closedByUser = false;
  private readonly backoffBaseMs: number;
  private readonly backoffMaxMs: number;
  private readonly schedule: (fn: () => void, delayMs: number) => unknown;

  constructor(private readonly options: ConnectionOptions) {
    this.backoffBaseMs = options.backoffBaseMs ?? 250;
    this.backoffMaxMs = options.backoffMaxMs ?? 8000;
    this.schedule =
      options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
  }

  /** Backoff delay before reconnect attempt n (1-based): base * 2^(n-1). */
  backoffDelayMs(attempt: number): number {
    return Math.min(
      this.backoffBaseMs * Math.pow(2, Math.max(0, attempt - 1)),
      this.backoffMaxMs,
    );
  }

  connect(): void {
    this.closedByUser = false;
    this.options.onStatus?.("connecting");
    const socket = this.options.socketFactory(this.options.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.options.onStatus?.("open");
      socket.send(JSON.stringify(this.options.helloFactory()));
    };
    socket.onmessage = (event: { data: unknown }) => {
      let raw: unknown;
      try {
        raw = JSON.parse(String(event.data));
      } catch {
        return; // non-JSON frames are dropped
      }
      const msg = parseServerMsg(raw);
      if (msg !== null) this.options.onMessage(msg);
    };
    socket.onclose = () => {
      this.socket = null;
      this.options.onStatus?.("closed");
      if (this.closedByUser) return;
      this.attempts += 1;
      this.schedule(() => this.connect(), this.backoffDelayMs(this.attempts));
    };
  }

  send(msg: ConsoleMsg): void {
    if (this.socket === null) {
      throw new Error("socket is not connected");
    }
    this.socket.send(JSON.stringify(msg));
  }

  close(): void {
    this.closedByUser = true;
    this.socket?.close();
  }
}
