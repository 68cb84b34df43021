import { describe, expect, it } from "vitest";
import { ConsoleConnection, SocketLike } from "../src/connection.js";
import { ServerMsg } from "../src/protocol.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: ((...args: never[]) => void) | null = null;
  onclose: ((...args: never[]) => void) | null = null;
  onmessage: ((event: never) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.emitClose();
  }

  emitOpen(): void {
    this.onopen?.();
  }

  emitClose(): void {
    this.onclose?.();
  }

  emitMessage(data: string): void {
    (this.onmessage as ((event: { data: unknown }) => void) | null)?.({ data });
  }
}

interface Harness {
  connection: ConsoleConnection;
  sockets: FakeSocket[];
  received: ServerMsg[];
  statuses: string[];
  scheduled: { fn: () => void; delayMs: number }[];
}

function makeHarness(): Harness {
  const sockets: FakeSocket[] = [];
  const received: ServerMsg[] = [];
  const statuses: string[] = [];
  const scheduled: { fn: () => void; delayMs: number }[] = [];
  const connection = new ConsoleConnection({
    url: "ws://test/ws",
    socketFactory: () => {
      const socket = new FakeSocket();
      sockets.push(socket);
      return socket;
    },
    helloFactory: () => ({ type: "console_hello", client_id: 7 }),
    onMessage: (msg) => received.push(msg),
    onStatus: (status) => statuses.push(status),
    schedule: (fn, delayMs) => scheduled.push({ fn, delayMs }),
  });
  return { connection, sockets, received, statuses, scheduled };
}

describe("ConsoleConnection", () => {
  it("announces itself immediately after every open", () => {
    const h = makeHarness();
    h.connection.connect();
    expect(h.sockets).toHaveLength(1);
    expect(h.sockets[0].sent).toHaveLength(0); // nothing before open
    h.sockets[0].emitOpen();
    expect(JSON.parse(h.sockets[0].sent[0])).toEqual({
      type: "console_hello",
      client_id: 7,
    });
    expect(h.statuses).toEqual(["connecting", "open"]);
  });

  it("forwards only documents that validate", () => {
    const h = makeHarness();
    h.connection.connect();
    h.sockets[0].emitOpen();
    h.sockets[0].emitMessage("this is not json");
    h.sockets[0].emitMessage(JSON.stringify({ type: "mystery" }));
    h.sockets[0].emitMessage(JSON.stringify({ type: "roster", clients: [] }));
    expect(h.received).toEqual([{ type: "roster", clients: [] }]);
  });

  it("backs off exponentially: 250, 500, 1000, ... capped at 8000 ms", () => {
    const h = makeHarness();
    expect([1, 2, 3, 4, 5, 6, 7].map((n) => h.connection.backoffDelayMs(n)))
      .toEqual([250, 500, 1000, 2000, 4000, 8000, 8000]);
  });

  it("reconnects after an unexpected close and resyncs with a fresh hello", () => {
    const h = makeHarness();
    h.connection.connect();
    h.sockets[0].emitOpen();
    h.sockets[0].emitClose();
    expect(h.scheduled).toHaveLength(1);
    expect(h.scheduled[0].delayMs).toBe(250);
    h.scheduled[0].fn();
    expect(h.sockets).toHaveLength(2);
    h.sockets[1].emitOpen();
    // the hello is repeated so the server replays the full snapshot
    expect(JSON.parse(h.sockets[1].sent[0]).type).toBe("console_hello");
  });

  it("doubles the delay on consecutive failures and resets after an open", () => {
    const h = makeHarness();
    h.connection.connect();
    h.sockets[0].emitClose(); // never opened
    h.scheduled[0].fn();
    h.sockets[1].emitClose();
    h.scheduled[1].fn();
    h.sockets[2].emitClose();
    expect(h.scheduled.map((s) => s.delayMs)).toEqual([250, 500, 1000]);
    h.scheduled[2].fn();
    h.sockets[3].emitOpen(); // success resets the attempt counter
    h.sockets[3].emitClose();
    expect(h.scheduled[3].delayMs).toBe(250);
  });

  it("does not reconnect after a user-initiated close", () => {
    const h = makeHarness();
    h.connection.connect();
    h.sockets[0].emitOpen();
    h.connection.close();
    expect(h.scheduled).toHaveLength(0);
    expect(h.statuses.at(-1)).toBe("closed");
  });

  it("refuses to send while disconnected", () => {
    const h = makeHarness();
    expect(() => h.connection.send({ type: "console_hello" }))
      .toThrow(/not connected/);
  });
});
