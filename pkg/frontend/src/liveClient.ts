/**
 * Connection state machine for the /live stream.
 *
 * Responsibilities: handshake (server hello -> canvas hello), forwarding
 * pointer samples, buffering up to 5 s of samples while disconnected and
 * flushing them on reconnect, exponential-backoff reconnection, and
 * dispatching track updates / final scores to the view layer. The
 * socket and timer are injected so the whole machine is testable
 * without a browser or a network.
 */

import { Backoff } from "./backoff.js";
import { SampleBuffer } from "./buffer.js";
import type { PointerSample } from "./downsample.js";
import {
  FinalRecord,
  HelloMessage,
  UpdateMessage,
  helloMessage,
  parseServerMessage,
  pointerMessage,
} from "./protocol.js";

// Handler slots typed loosely so both the browser WebSocket and test
// fakes satisfy the interface structurally.
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((...args: any[]) => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: ((...args: any[]) => void) | null;
  onerror: ((...args: any[]) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;
export type Scheduler = (fn: () => void, delaySeconds: number) => void;

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface LiveClientOptions {
  url: string;
  canvasWidth: number;
  canvasHeight: number;
  socketFactory: SocketFactory;
  schedule?: Scheduler;
  onStatus?: (status: ConnectionStatus) => void;
  onHello?: (hello: HelloMessage) => void;
  onUpdate?: (update: UpdateMessage) => void;
  onFinal?: (record: FinalRecord) => void;
  onProtocolError?: (message: string) => void;
}

const defaultSchedule: Scheduler = (fn, delaySeconds) => {
  setTimeout(fn, delaySeconds * 1000);
};

export class LiveClient {
  readonly buffer = new SampleBuffer(5);
  private readonly backoff = new Backoff();
  private socket: SocketLike | null = null;
  private handshaken = false;
  private stopped = false;
  clientId: number | null = null;
  bounds: [number, number, number, number] | null = null;

  constructor(private readonly options: LiveClientOptions) {}

  private get schedule(): Scheduler {
    return this.options.schedule ?? defaultSchedule;
  }

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    this.socket?.close();
    this.socket = null;
  }

  get connected(): boolean {
    return this.handshaken;
  }

  private connect(): void {
    if (this.stopped) return;
    this.options.onStatus?.("connecting");
    this.handshaken = false;
    const socket = this.options.socketFactory(this.options.url);
    this.socket = socket;
    socket.onopen = () => {
      // Server speaks first; handshake completes in onmessage.
    };
    socket.onmessage = (event) => this.handleMessage(String(event.data));
    socket.onclose = () => this.handleDrop();
    socket.onerror = () => {
      // onclose follows; nothing to do here.
    };
  }

  private handleMessage(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) return;
    if (msg.type === "hello") {
      this.clientId = msg.client_id;
      this.bounds = msg.bounds;
      this.socket?.send(
        helloMessage(this.options.canvasWidth, this.options.canvasHeight),
      );
      this.handshaken = true;
      this.backoff.reset();
      this.options.onStatus?.("connected");
      this.options.onHello?.(msg);
      for (const sample of this.buffer.drain()) {
        this.socket?.send(pointerMessage(sample.t, sample.x, sample.y));
      }
      return;
    }
    if (msg.type === "error") {
      this.options.onProtocolError?.(msg.message);
      return;
    }
    this.options.onUpdate?.(msg);
    for (const record of msg.finals ?? []) {
      this.options.onFinal?.(record);
    }
  }

  private handleDrop(): void {
    this.handshaken = false;
    this.socket = null;
    if (this.stopped) return;
    this.options.onStatus?.("disconnected");
    this.schedule(() => this.connect(), this.backoff.next());
  }

  /** Forward a pointer sample, or hold it while the stream is down. */
  sendPointer(sample: PointerSample): void {
    if (this.handshaken && this.socket) {
      this.socket.send(pointerMessage(sample.t, sample.x, sample.y));
    } else {
      this.buffer.push(sample);
    }
  }
}
