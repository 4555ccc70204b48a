export function createState(pollPeriod = 2) {
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
export function workflowActive(snapshot) {
    if (!snapshot)
        return false;
    return Object.values(snapshot.nodes).some((node) => node.status !== undefined && ACTIVE.has(node.status));
}
export function runDisabled(state) {
    return state.selected === null || state.runPending || workflowActive(state.snapshot);
}
/** One repeating fetch cycle; at most one tick is in flight at a time. */
export class Poller {
    constructor(periodSeconds, tick) {
        this.tick = tick;
        this.timer = null;
        this.inflight = null;
        this.periodSeconds = Math.max(1, periodSeconds);
    }
    start() {
        this.stop();
        void this.fire();
        this.timer = setInterval(() => void this.fire(), this.periodSeconds * 1000);
    }
    /** Cancels the in-flight poll, so a stale response can never land. */
    stop() {
        if (this.timer !== null)
            clearInterval(this.timer);
        this.timer = null;
        this.inflight?.abort();
        this.inflight = null;
    }
    restart() {
        this.start();
    }
    get running() {
        return this.timer !== null;
    }
    async fire() {
        this.inflight?.abort();
        const controller = new AbortController();
        this.inflight = controller;
        try {
            await this.tick(controller.signal);
        }
        catch {
            // the tick owns its error handling; aborts end up here and are fine
        }
        finally {
            if (this.inflight === controller)
                this.inflight = null;
        }
    }
}
