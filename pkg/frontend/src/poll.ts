/** Polling with no overlap: the next tick is scheduled only after the
 * previous one settles, and a stopped poller never fires again. Timer
 * functions are injected for tests.
 */

export interface TimerDeps {
  set(fn: () => void, ms: number): unknown;
  clear(handle: unknown): void;
}

const realTimers: TimerDeps = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (handle) => clearTimeout(handle as Parameters<typeof clearTimeout>[0]),
};

export interface Poller {
  stop(): void;
}

export function startPolling(tick: () => Promise<void>, intervalMs: number,
                             timers: TimerDeps = realTimers): Poller {
  let stopped = false;
  let handle: unknown = null;

  const loop = () => {
    handle = timers.set(() => {
      void tick().catch(() => undefined).then(() => {
        if (!stopped) loop();
      });
    }, intervalMs);
  };
  loop();

  return {
    stop() {
      stopped = true;
      if (handle !== null) timers.clear(handle);
    },
  };
}

/** Newest-wins guard: remembers the latest generation handed out and tells
 * callers whether their response is still current. */
export class Generation {
  private current = 0;

  next(): number {
    return ++this.current;
  }

  isCurrent(generation: number): boolean {
    return generation === this.current;
  }
}
