import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { FinalizeCountdown } from "../src/countdown.js";

describe("FinalizeCountdown", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("fires after three seconds with per-second ticks", () => {
    const fired = vi.fn();
    const ticks: number[] = [];
    const cd = new FinalizeCountdown(fired, (s) => ticks.push(s));
    cd.start();
    expect(cd.active).toBe(true);
    vi.advanceTimersByTime(2999);
    expect(fired).not.toHaveBeenCalled();
    vi.advanceTimersByTime(1);
    expect(fired).toHaveBeenCalledTimes(1);
    expect(cd.active).toBe(false);
    expect(ticks).toEqual([3, 2, 1]);
  });

  it("cancel stops the capture so drawing can resume", () => {
    const fired = vi.fn();
    const cd = new FinalizeCountdown(fired);
    cd.start();
    vi.advanceTimersByTime(1500);
    expect(cd.cancel()).toBe(true);
    vi.advanceTimersByTime(10_000);
    expect(fired).not.toHaveBeenCalled();
    expect(cd.cancel()).toBe(false); // already idle
  });

  it("restart resets the clock", () => {
    const fired = vi.fn();
    const cd = new FinalizeCountdown(fired);
    cd.start();
    vi.advanceTimersByTime(2000);
    cd.start();
    vi.advanceTimersByTime(2000);
    expect(fired).not.toHaveBeenCalled();
    vi.advanceTimersByTime(1000);
    expect(fired).toHaveBeenCalledTimes(1);
  });
});
