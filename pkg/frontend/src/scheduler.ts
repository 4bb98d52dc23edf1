/**
 * Debounced request scheduling with in-flight cancellation.
 *
 * Dial movement calls schedule() freely; one request fires after the dial
 * rests for the debounce interval. Every issued request gets an id and an
 * AbortController; a newer request aborts the older one, and a response is
 * delivered only while its id is still current, so stale frames can never
 * overwrite newer ones.
 */

export const DEFAULT_DEBOUNCE_MS = 80;

function isAbortError(err: unknown): boolean {
  return err instanceof Error && err.name === "AbortError";
}

export class RenderScheduler<T> {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private requestId = 0;
  private controller: AbortController | null = null;

  constructor(
    private readonly fetcher: (yaw: number, signal: AbortSignal) => Promise<T>,
    private readonly deliver: (result: T, yaw: number) => void,
    private readonly onError: (err: unknown) => void = () => undefined,
    private readonly debounceMs: number = DEFAULT_DEBOUNCE_MS,
  ) {}

  /** Trailing-edge debounce: the most recent yaw wins. */
  schedule(yaw: number): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.issue(yaw);
    }, this.debounceMs);
  }

  /** Fire immediately, bypassing the debounce (initial load). */
  fireNow(yaw: number): Promise<void> {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    return this.issue(yaw);
  }

  get inFlightId(): number {
    return this.requestId;
  }

  private async issue(yaw: number): Promise<void> {
    const id = ++this.requestId;
    this.controller?.abort();
    this.controller = new AbortController();
    try {
      const result = await this.fetcher(yaw, this.controller.signal);
      if (id === this.requestId) this.deliver(result, yaw);
    } catch (err) {
      if (id === this.requestId && !isAbortError(err)) this.onError(err);
    }
  }

  dispose(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.requestId++;
    this.controller?.abort();
  }
}
