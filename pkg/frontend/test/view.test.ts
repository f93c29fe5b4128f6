import { describe, expect, it } from "vitest";

import { Context2DLike, ALERT_COLOR, makeMapper, paintBackground, paintLiveTracks, scaledLineWidth } from "../src/view.js";
import type { StateSnapshot } from "../src/protocol.js";

class RecordingContext implements Context2DLike {
  fillStyle: string | CanvasGradient | CanvasPattern = "";
  strokeStyle: string | CanvasGradient | CanvasPattern = "";
  lineWidth = 0;
  lineCap = "";
  lineJoin = "";
  globalAlpha = 1;
  ops: { kind: string; detail?: unknown }[] = [];
  strokes: { color: string; width: number; alpha: number }[] = [];

  fillRect(x: number, y: number, w: number, h: number): void {
    this.ops.push({ kind: "fillRect", detail: [x, y, w, h, this.fillStyle] });
  }
  beginPath(): void {
    this.ops.push({ kind: "beginPath" });
  }
  moveTo(): void {}
  lineTo(): void {}
  stroke(): void {
    this.strokes.push({
      color: String(this.strokeStyle),
      width: this.lineWidth,
      alpha: this.globalAlpha,
    });
  }
}

function snapshot(partial: Partial<StateSnapshot> = {}): StateSnapshot {
  return {
    schema: 1,
    t: 100.0,
    tracks: [],
    finished: [],
    palette: {
      date: "2026-08-05",
      foreground: "#00FF00",
      background: "#101820",
      line_width: 6,
    },
    threshold: null,
    bounds: [0, 0, 20, 20],
    ...partial,
  };
}

describe("ground-to-canvas mapper", () => {
  it("maps corners with a flipped y axis", () => {
    const mapper = makeMapper([0, 0, 20, 20], 800, 600);
    expect(mapper.toCanvas(0, 0)).toEqual([0, 600]);
    expect(mapper.toCanvas(20, 20)).toEqual([800, 0]);
    expect(mapper.toCanvas(10, 10)).toEqual([400, 300]);
  });
});

describe("line width rule", () => {
  it("scales from the 1080p reference and never vanishes", () => {
    expect(scaledLineWidth(6, 1080)).toBe(6);
    expect(scaledLineWidth(6, 540)).toBe(3);
    expect(scaledLineWidth(2, 100)).toBe(1);
  });
});

describe("background layer", () => {
  it("fills with the palette background", () => {
    const ctx = new RecordingContext();
    paintBackground(ctx, snapshot(), 800, 600);
    const fill = ctx.ops.find((op) => op.kind === "fillRect");
    expect(fill?.detail).toEqual([0, 0, 800, 600, "#101820"]);
  });

  it("fades tracks by age with the shared law", () => {
    const ctx = new RecordingContext();
    const snap = snapshot({
      t: 1800.0 + 10.0, // newest point is exactly tau old
      tracks: [{
        id: 1,
        points: [[0, 2, 10], [10, 18, 10]],
        normality: null,
      }],
    });
    paintBackground(ctx, snap, 800, 600);
    expect(ctx.strokes).toHaveLength(1);
    expect(Math.abs(ctx.strokes[0].alpha - Math.exp(-1))).toBeLessThan(1e-12);
    expect(ctx.strokes[0].color).toBe("#00FF00");
  });

  it("tints tracks below the threshold with the alert color", () => {
    const ctx = new RecordingContext();
    const snap = snapshot({
      threshold: 0.14,
      tracks: [
        { id: 1, points: [[99, 2, 10], [100, 4, 10]], normality: 0.05 },
        { id: 2, points: [[99, 2, 12], [100, 4, 12]], normality: 0.5 },
      ],
    });
    paintBackground(ctx, snap, 800, 600);
    expect(ctx.strokes.map((s) => s.color)).toEqual([ALERT_COLOR, "#00FF00"]);
  });
});

describe("live layer", () => {
  it("switches a stroke to the alert tint when flagged", () => {
    const ctx = new RecordingContext();
    paintLiveTracks(
      ctx,
      [
        { id: 1, owner: 1, points: [[0, 1, 1], [1, 2, 2]], normality: 0.01, atypical: true },
        { id: 2, owner: 2, points: [[0, 3, 3], [1, 4, 4]], normality: 0.9, atypical: false },
      ],
      [0, 0, 20, 20],
      "#00FF00",
      6,
      800,
      600,
    );
    expect(ctx.strokes.map((s) => s.color)).toEqual([ALERT_COLOR, "#00FF00"]);
  });
});
