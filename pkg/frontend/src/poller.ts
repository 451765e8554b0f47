// Fixed-interval polling of /received while a transfer is active. Poll
// failures are retried silently up to a cap, then surfaced once.

import type { ApnClient } from "./client.js";
import type { ReceivedSnapshot } from "./types.js";

export interface PollerHooks {
  onSnapshot(snap: ReceivedSnapshot): void;
  onGaveUp(reason: string): void;
}

export const DEFAULT_POLL_INTERVAL_MS = 500;
export const DEFAULT_FAILURE_CAP = 5;

export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private failures = 0;
  private inFlight = false;

  constructor(
    private readonly client: ApnClient,
    private readonly hooks: PollerHooks,
    private readonly intervalMs: number = DEFAULT_POLL_INTERVAL_MS,
    private readonly failureCap: number = DEFAULT_FAILURE_CAP,
  ) {}

  get running(): boolean {
    return this.timer !== null;
  }

  start(): void {
    if (this.timer !== null) {
      return;
    }
    this.failures = 0;
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
    void this.tick();
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  private async tick(): Promise<void> {
    if (this.inFlight) {
      return; // never stack requests behind a slow poll
    }
    this.inFlight = true;
    try {
      const snap = await this.client.received();
      this.failures = 0;
      this.hooks.onSnapshot(snap);
      if (snap.status === "COMPLETE" || snap.status === "ERROR" ||
          snap.status === "TIMEOUT") {
        this.stop();
      }
    } catch (err) {
      this.failures += 1;
      if (this.failures >= this.failureCap) {
        this.stop();
        this.hooks.onGaveUp(String(err));
      }
    } finally {
      this.inFlight = false;
    }
  }
}
