/**
 * The finalize countdown: releasing the lasso arms a visible 3-second
 * timer (matching the capture flow's delay); clicking again cancels it
 * and drawing resumes.
 */

export class FinalizeCountdown {
  private handle: ReturnType<typeof setTimeout> | null = null;
  private ticker: ReturnType<typeof setInterval> | null = null;
  private remaining = 0;

  constructor(
    private readonly onFire: () => void,
    private readonly onTick: (secondsLeft: number) => void = () => {},
    private readonly seconds = 3,
  ) {}

  get active(): boolean {
    return this.handle !== null;
  }

  start(): void {
    this.cancel();
    this.remaining = this.seconds;
    this.onTick(this.remaining);
    this.ticker = setInterval(() => {
      this.remaining -= 1;
      if (this.remaining > 0) this.onTick(this.remaining);
    }, 1000);
    this.handle = setTimeout(() => {
      this.clearTimers();
      this.onFire();
    }, this.seconds * 1000);
  }

  cancel(): boolean {
    const wasActive = this.active;
    this.clearTimers();
    return wasActive;
  }

  private clearTimers(): void {
    if (this.handle !== null) clearTimeout(this.handle);
    if (this.ticker !== null) clearInterval(this.ticker);
    this.handle = null;
    this.ticker = null;
  }
}
