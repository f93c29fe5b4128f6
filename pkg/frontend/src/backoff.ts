/** Exponential reconnect backoff with a ceiling, reset on success. */

export class Backoff {
  private attempt = 0;

  constructor(
    readonly baseSeconds = 0.5,
    readonly maxSeconds = 10,
    readonly factor = 2,
  ) {}

  next(): number {
    const delay = Math.min(
      this.baseSeconds * this.factor ** this.attempt,
      this.maxSeconds,
    );
    this.attempt += 1;
    return delay;
  }

  reset(): void {
    this.attempt = 0;
  }
}
