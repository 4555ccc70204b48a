import type { WorkflowSnapshot } from "./types.js";

export type Mode = "table" | "graph";

export interface ViewState {
  selected: string | null;
  mode: Mode;
  pollPeriod: number;
  workflows: string[];
  snapshot: WorkflowSnapshot | null;
  connected: boolean;
  notice: string | null;
  runPending: boolean;
}

export function createState(pollPeriod = 2): ViewState {
  return {
    selected: null,
    mode: "table",
    pollPeriod: Math.max(1, pollPeriod),
    workflows: [],
    snapshot: null,
    connected: true,
    notice: null,
    runPending: false,
  };
}

const ACTIVE = new Set(["submitted", "running"]);

export function workflowActive(snapshot: WorkflowSnapshot | null): boolean {
  if (!snapshot) return false;
  return Object.values(snapshot.nodes).some(
    (node) => node.status !== undefined && ACTIVE.has(node.status),
  );
}

export function runDisabled(state: ViewState): boolean {
  return state.selected === null || state.runPending || workflowActive(state.snapshot);
}

/** One repeating fetch cycle; at most one tick is in flight at a time. */
export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inflight: AbortController | null = null;
  readonly periodSeconds: number;

  constructor(
    periodSeconds: number,
    private readonly tick: (signal: AbortSignal) => Promise<void>,
  ) {
    this.periodSeconds = Math.max(1, periodSeconds);
  }

  start(): void {
    this.stop();
    void this.fire();
    this.timer = setInterval(() => void this.fire(), this.periodSeconds * 1000);
  }

  /** Cancels the in-flight poll, so a stale response can never land. */
  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
    this.inflight?.abort();
    this.inflight = null;
  }

  restart(): void {
    this.start();
  }

  get running(): boolean {
    return this.timer !== null;
  }

  private async fire(): Promise<void> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      await this.tick(controller.signal);
    } catch {
      // the tick owns its error handling; aborts end up here and are fine
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }
}
