/**
 * Pointer downsampler: the browser delivers pointer/rAF events at the
 * display refresh rate (60-120 Hz); the service wants ~15 Hz. The first
 * sample of a stroke passes immediately so strokes start without lag,
 * later ones are dropped until the interval has elapsed.
 */

export interface PointerSample {
  t: number; // seconds, capture clock
  x: number;
  y: number;
}

export class Downsampler {
  private lastEmit: number | null = null;
  readonly interval: number;
  // 5% jitter tolerance: otherwise a display grid whose frame spacing
  // rounds a hair below the interval halves the effective rate.
  private readonly slack: number;

  constructor(targetHz = 15) {
    if (targetHz <= 0) throw new Error("targetHz must be positive");
    this.interval = 1 / targetHz;
    this.slack = this.interval * 0.05;
  }

  /** Returns the sample when it should be forwarded, null when dropped. */
  push(sample: PointerSample): PointerSample | null {
    if (
      this.lastEmit !== null &&
      sample.t - this.lastEmit < this.interval - this.slack
    ) {
      return null;
    }
    this.lastEmit = sample.t;
    return sample;
  }

  /** Start of a new stroke: the next sample always passes. */
  reset(): void {
    this.lastEmit = null;
  }
}
