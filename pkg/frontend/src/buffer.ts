/**
 * Bounded holding buffer for pointer samples while the stream is down.
 * Keeps at most the newest `maxAgeSeconds` of samples (the service has
 * no use for older ones); everything is flushed in order on reconnect.
 */

import type { PointerSample } from "./downsample.js";

export class SampleBuffer {
  private samples: PointerSample[] = [];
  readonly maxAgeSeconds: number;

  constructor(maxAgeSeconds = 5) {
    this.maxAgeSeconds = maxAgeSeconds;
  }

  get size(): number {
    return this.samples.length;
  }

  push(sample: PointerSample): void {
    this.samples.push(sample);
    const cutoff = sample.t - this.maxAgeSeconds;
    while (this.samples.length && this.samples[0].t < cutoff) {
      this.samples.shift();
    }
  }

  drain(): PointerSample[] {
    const out = this.samples;
    this.samples = [];
    return out;
  }
}
