import { describe, expect, it } from "vitest";

import { LiveClient, SocketLike } from "../src/liveClient.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onmessage: ((event: { data: unknown }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  serverSays(payload: unknown): void {
    this.onmessage?.({ data: JSON.stringify(payload) });
  }

  helloFromServer(clientId = 7): void {
    this.serverSays({
      type: "hello", schema: 1, client_id: clientId,
      bounds: [0, 0, 20, 20], tick_hz: 15,
    });
  }
}

function harness() {
  const sockets: FakeSocket[] = [];
  const timers: (() => void)[] = [];
  const statuses: string[] = [];
  const finals: unknown[] = [];
  const client = new LiveClient({
    url: "ws://test/live",
    canvasWidth: 800,
    canvasHeight: 600,
    socketFactory: () => {
      const socket = new FakeSocket();
      sockets.push(socket);
      return socket;
    },
    schedule: (fn) => {
      timers.push(fn);
    },
    onStatus: (status) => statuses.push(status),
    onFinal: (record) => finals.push(record),
  });
  return { client, sockets, timers, statuses, finals };
}

describe("live client", () => {
  it("completes the handshake and reports connected", () => {
    const { client, sockets, statuses } = harness();
    client.start();
    sockets[0].helloFromServer(9);
    expect(client.connected).toBe(true);
    expect(client.clientId).toBe(9);
    expect(JSON.parse(sockets[0].sent[0])).toEqual({
      type: "hello", canvas: { width: 800, height: 600 },
    });
    expect(statuses).toEqual(["connecting", "connected"]);
  });

  it("buffers pointers while down and flushes them on reconnect", () => {
    const { client, sockets, timers, statuses } = harness();
    client.start();
    sockets[0].helloFromServer();
    sockets[0].onclose?.(); // drop
    expect(statuses.at(-1)).toBe("disconnected");

    client.sendPointer({ t: 10.0, x: 1, y: 2 });
    client.sendPointer({ t: 10.1, x: 3, y: 4 });
    expect(client.buffer.size).toBe(2);

    timers.pop()?.(); // reconnect timer fires
    sockets[1].helloFromServer();
    const pointers = sockets[1].sent
      .map((raw) => JSON.parse(raw))
      .filter((msg) => msg.type === "pointer");
    expect(pointers.map((p) => [p.x, p.y])).toEqual([[1, 2], [3, 4]]);
    expect(client.buffer.size).toBe(0);
  });

  it("sends pointers straight through while connected", () => {
    const { client, sockets } = harness();
    client.start();
    sockets[0].helloFromServer();
    client.sendPointer({ t: 1.0, x: 5, y: 6 });
    const last = JSON.parse(sockets[0].sent.at(-1)!);
    expect(last).toEqual({ type: "pointer", t: 1.0, x: 5, y: 6 });
  });

  it("dispatches finals from update pushes", () => {
    const { client, sockets, finals } = harness();
    client.start();
    sockets[0].helloFromServer();
    sockets[0].serverSays({
      type: "update", schema: 1, t: 2.0, threshold: 0.14, tracks: [],
      finals: [{
        type: "final", track_id: 4, owner: 7, normality: 0.5,
        atypical: false, points: [[0, 1, 2]],
      }],
    });
    expect(finals).toHaveLength(1);
    expect((finals[0] as { track_id: number }).track_id).toBe(4);
  });

  it("stops reconnecting after stop()", () => {
    const { client, sockets, timers } = harness();
    client.start();
    sockets[0].helloFromServer();
    client.stop();
    expect(sockets[0].closed).toBe(true);
    expect(timers).toHaveLength(0);
    expect(sockets).toHaveLength(1);
  });
});
