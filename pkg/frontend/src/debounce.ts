/** Debounce and latest-wins helpers for the prior slider loop. */

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
}

/** Collapse a burst of calls into one, fired waitMs after the burst ends. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | undefined;
  const wrapped = (...args: A): void => {
    if (timer !== undefined) {
      clearTimeout(timer);
    }
    timer = setTimeout(() => {
      timer = undefined;
      fn(...args);
    }, waitMs);
  };
  wrapped.cancel = (): void => {
    if (timer !== undefined) {
      clearTimeout(timer);
      timer = undefined;
    }
  };
  return wrapped;
}

/**
 * At most one request in flight: starting a new task aborts the previous
 * one, and a stale result is dropped instead of overwriting a newer one.
 */
export class LatestWins {
  private controller: AbortController | null = null;
  private seq = 0;

  /** Returns the task's result, or null when a newer run superseded it. */
  async run<T>(task: (signal: AbortSignal) => Promise<T>): Promise<T | null> {
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    const id = ++this.seq;
    try {
      const result = await task(controller.signal);
      return id === this.seq ? result : null;
    } catch (err) {
      if (controller.signal.aborted) {
        return null;
      }
      throw err;
    }
  }
}
