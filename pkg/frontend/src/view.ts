/**
 * Canvas painting for the two layers:
 *
 *  - background: the day's accumulated tracks from /state, repainted at
 *    most once a second, each fading by age exactly like the server's
 *    renderer;
 *  - foreground: live tracks from /live pushes, tinted with the alert
 *    color the moment the service flags them atypical.
 *
 * Painting targets a minimal context interface so tests can record the
 * drawing ops without a DOM.
 */

import { fadeAlpha } from "./fade.js";
import type { StateSnapshot, TrackUpdate } from "./protocol.js";

export const ALERT_COLOR = "#D62828";

export interface Context2DLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  lineCap: string;
  lineJoin: string;
  globalAlpha: number;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
}

export interface GroundMapper {
  toCanvas(x: number, y: number): [number, number];
}

export function makeMapper(
  bounds: [number, number, number, number],
  width: number,
  height: number,
): GroundMapper {
  const [x0, y0, x1, y1] = bounds;
  return {
    toCanvas(x: number, y: number): [number, number] {
      return [
        ((x - x0) / (x1 - x0)) * width,
        (1 - (y - y0) / (y1 - y0)) * height,
      ];
    },
  };
}

function strokePolyline(
  ctx: Context2DLike,
  mapper: GroundMapper,
  points: [number, number, number][],
  color: string,
  width: number,
  alpha: number,
): void {
  if (points.length < 2 || alpha <= 0) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.lineCap = "round";
  ctx.lineJoin = "round";
  ctx.globalAlpha = alpha;
  ctx.beginPath();
  const [sx, sy] = mapper.toCanvas(points[0][1], points[0][2]);
  ctx.moveTo(sx, sy);
  for (const [, x, y] of points.slice(1)) {
    const [cx, cy] = mapper.toCanvas(x, y);
    ctx.lineTo(cx, cy);
  }
  ctx.stroke();
  ctx.globalAlpha = 1;
}

/** Scale the session's 1080p-reference width to this canvas. */
export function scaledLineWidth(referenceWidth: number, canvasHeight: number): number {
  return Math.max(1, Math.round((referenceWidth * canvasHeight) / 1080));
}

export function paintBackground(
  ctx: Context2DLike,
  snapshot: StateSnapshot,
  width: number,
  height: number,
): void {
  const palette = snapshot.palette;
  ctx.globalAlpha = 1;
  ctx.fillStyle = palette?.background ?? "#101010";
  ctx.fillRect(0, 0, width, height);
  const mapper = makeMapper(snapshot.bounds, width, height);
  const lineWidth = scaledLineWidth(palette?.line_width ?? 4, height);
  const color = palette?.foreground ?? "#E0E0E0";
  for (const track of snapshot.tracks) {
    if (!track.points.length) continue;
    const age = snapshot.t - track.points[track.points.length - 1][0];
    const atypical =
      snapshot.threshold !== null &&
      track.normality !== null &&
      track.normality < snapshot.threshold;
    strokePolyline(
      ctx,
      mapper,
      track.points,
      atypical ? ALERT_COLOR : color,
      lineWidth,
      fadeAlpha(age),
    );
  }
}

export function paintLiveTracks(
  ctx: Context2DLike,
  tracks: TrackUpdate[],
  bounds: [number, number, number, number],
  paletteColor: string,
  referenceWidth: number,
  width: number,
  height: number,
): void {
  const mapper = makeMapper(bounds, width, height);
  const lineWidth = scaledLineWidth(referenceWidth, height);
  for (const track of tracks) {
    strokePolyline(
      ctx,
      mapper,
      track.points,
      track.atypical ? ALERT_COLOR : paletteColor,
      lineWidth,
      1.0,
    );
  }
}
