/**
 * Wire types for the live service (schema 1) and runtime guards for the
 * messages the browser consumes. The UI never computes scores itself;
 * every number shown on screen arrives through these messages.
 */

export const SCHEMA = 1;

export interface TrackUpdate {
  id: number;
  owner: number | null;
  points: [number, number, number][]; // [t, x, y] in ground meters
  normality: number | null;
  atypical: boolean | null;
}

export interface FinalRecord {
  type: "final";
  track_id: number;
  owner: number | null;
  normality: number | null;
  atypical: boolean | null;
  points: [number, number, number][];
}

export interface UpdateMessage {
  type: "update";
  schema: number;
  t: number;
  threshold: number | null;
  tracks: TrackUpdate[];
  finals: FinalRecord[];
}

export interface HelloMessage {
  type: "hello";
  schema: number;
  client_id: number;
  bounds: [number, number, number, number];
  tick_hz: number;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = HelloMessage | UpdateMessage | ErrorMessage;

export interface StateSnapshot {
  schema: number;
  t: number;
  tracks: { id: number; points: [number, number, number][]; normality: number | null }[];
  finished: { track_id: number; normality: number | null }[];
  palette: {
    date: string;
    foreground: string;
    background: string;
    line_width: number;
  } | null;
  threshold: number | null;
  bounds: [number, number, number, number];
}

function isNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isPoint(v: unknown): v is [number, number, number] {
  return Array.isArray(v) && v.length === 3 && v.every(isNumber);
}

function isTrack(v: unknown): v is TrackUpdate {
  const t = v as TrackUpdate;
  return (
    !!t &&
    isNumber(t.id) &&
    Array.isArray(t.points) &&
    t.points.every(isPoint)
  );
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  const msg = data as Record<string, unknown>;
  if (!msg || typeof msg !== "object") return null;
  switch (msg.type) {
    case "hello":
      if (
        isNumber(msg.client_id) &&
        Array.isArray(msg.bounds) &&
        msg.bounds.length === 4 &&
        msg.bounds.every(isNumber)
      ) {
        return msg as unknown as HelloMessage;
      }
      return null;
    case "update":
      if (Array.isArray(msg.tracks) && msg.tracks.every(isTrack)) {
        const update = msg as unknown as UpdateMessage;
        return { ...update, finals: update.finals ?? [] };
      }
      return null;
    case "error":
      return typeof msg.message === "string"
        ? (msg as unknown as ErrorMessage)
        : { type: "error", message: "unspecified server error" };
    default:
      return null;
  }
}

export function pointerMessage(t: number, x: number, y: number): string {
  return JSON.stringify({ type: "pointer", t, x, y });
}

export function helloMessage(width: number, height: number): string {
  return JSON.stringify({ type: "hello", canvas: { width, height } });
}
