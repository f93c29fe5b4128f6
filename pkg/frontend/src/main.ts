/**
 * Browser entry point: wires pointer capture, the live stream, and the
 * background snapshot onto two stacked canvases. All logic with any
 * behavior worth testing lives in the imported modules; this file only
 * binds them to the DOM.
 */

import { Downsampler } from "./downsample.js";
import { LiveClient, SocketLike } from "./liveClient.js";
import type { StateSnapshot, TrackUpdate, UpdateMessage } from "./protocol.js";
import { paintBackground, paintLiveTracks } from "./view.js";

const STATE_POLL_SECONDS = 1.0;
const STALE_AFTER_SECONDS = 5.0;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const backgroundCanvas = el<HTMLCanvasElement>("background");
const liveCanvas = el<HTMLCanvasElement>("live");
const banner = el<HTMLDivElement>("banner");
const scoreBox = el<HTMLDivElement>("score");

function fit(canvas: HTMLCanvasElement): void {
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
}
fit(backgroundCanvas);
fit(liveCanvas);

let snapshot: StateSnapshot | null = null;
let snapshotAt = 0;
let liveTracks: TrackUpdate[] = [];
let myId: number | null = null;

const downsampler = new Downsampler(15);
const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/live`;

const client = new LiveClient({
  url: wsUrl,
  canvasWidth: liveCanvas.width,
  canvasHeight: liveCanvas.height,
  // DOM handler types are contravariant in the event parameter; the
  // runtime shape matches (the client only reads event.data).
  socketFactory: (url) => new WebSocket(url) as unknown as SocketLike,
  onStatus: (status) => {
    banner.dataset.status = status;
    banner.textContent =
      status === "connected" ? "" : status === "connecting"
        ? "connecting to the installation..."
        : "connection lost - strokes are buffered and will be sent on reconnect";
  },
  onHello: (hello) => {
    myId = hello.client_id;
  },
  onUpdate: (update: UpdateMessage) => {
    liveTracks = update.tracks;
    const mine = update.tracks.find((tr) => tr.owner === myId);
    if (mine && mine.normality !== null) {
      scoreBox.textContent = `your trace: ${mine.normality.toFixed(3)}${
        mine.atypical ? " (atypical!)" : ""
      }`;
      scoreBox.classList.toggle("atypical", mine.atypical === true);
    }
  },
  onFinal: (record) => {
    if (record.owner === myId && record.normality !== null) {
      scoreBox.textContent = `final score: ${record.normality.toFixed(3)}${
        record.atypical ? " (atypical!)" : ""
      }`;
      scoreBox.classList.toggle("atypical", record.atypical === true);
    }
  },
  onProtocolError: (message) => {
    banner.dataset.status = "disconnected";
    banner.textContent = `protocol error: ${message}`;
  },
});
client.start();

// Pointer capture at display refresh, downsampled to the stream rate.
let pointerDown = false;
liveCanvas.addEventListener("pointerdown", (event) => {
  pointerDown = true;
  downsampler.reset();
  forward(event);
});
liveCanvas.addEventListener("pointermove", (event) => {
  if (pointerDown) forward(event);
});
for (const kind of ["pointerup", "pointerleave", "pointercancel"] as const) {
  liveCanvas.addEventListener(kind, () => {
    pointerDown = false;
  });
}

function forward(event: PointerEvent): void {
  const rect = liveCanvas.getBoundingClientRect();
  const sample = downsampler.push({
    t: performance.now() / 1000,
    x: event.clientX - rect.left,
    y: event.clientY - rect.top,
  });
  if (sample) client.sendPointer(sample);
}

// Background layer: /state snapshot at 1 Hz with a staleness indicator.
async function pollState(): Promise<void> {
  try {
    const response = await fetch("/state");
    if (response.ok) {
      snapshot = (await response.json()) as StateSnapshot;
      snapshotAt = performance.now() / 1000;
    }
  } catch {
    // keep the last snapshot; staleness indicator takes over
  }
}
void pollState();
setInterval(() => void pollState(), STATE_POLL_SECONDS * 1000);

function repaint(): void {
  const now = performance.now() / 1000;
  const bg = backgroundCanvas.getContext("2d");
  const fg = liveCanvas.getContext("2d");
  if (bg && snapshot) {
    paintBackground(bg, snapshot, backgroundCanvas.width, backgroundCanvas.height);
  }
  if (fg && snapshot) {
    fg.clearRect(0, 0, liveCanvas.width, liveCanvas.height);
    paintLiveTracks(
      fg,
      liveTracks,
      snapshot.bounds,
      snapshot.palette?.foreground ?? "#E0E0E0",
      snapshot.palette?.line_width ?? 4,
      liveCanvas.width,
      liveCanvas.height,
    );
  }
  banner.classList.toggle(
    "stale",
    snapshot !== null && now - snapshotAt > STALE_AFTER_SECONDS,
  );
  requestAnimationFrame(repaint);
}
requestAnimationFrame(repaint);
