import type { WorkflowNode, WorkflowSnapshot } from "../src/types.js";

export function exampleSnapshot(
  overrides: Record<string, Partial<WorkflowNode>> = {},
): WorkflowSnapshot {
  const base: WorkflowSnapshot = {
    name: "workflow-example",
    nodes: {
      start: { name: "start", status: "undefined", progress: 0 },
      "fetch-data": {
        name: "fetch-data",
        status: "ready",
        progress: 0,
        user: "gregor",
        host: "localhost",
        kind: "local",
        script: "test-fetch-data.sh",
      },
      compute: {
        name: "compute",
        status: "ready",
        progress: 0,
        user: "gregor",
        host: "localhost",
        kind: "local",
        script: "test-compute.sh",
      },
      analyze: {
        name: "analyze",
        status: "ready",
        progress: 0,
        user: "gregor",
        host: "localhost",
        kind: "local",
        script: "test-analyze.sh",
      },
      end: { name: "end", status: "undefined", progress: 0 },
    },
    dependencies: ["start,fetch-data,compute,analyze,end"],
  };
  for (const [name, patch] of Object.entries(overrides)) {
    base.nodes[name] = { ...base.nodes[name], ...patch };
  }
  return base;
}

export interface RecordedCall {
  url: string;
  method: string;
  body: BodyInit | null | undefined;
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** In-memory stand-in for the HTTP service, routed by URL and method. */
export class FakeService {
  calls: RecordedCall[] = [];
  names: string[] = [];
  snapshots: Record<string, WorkflowSnapshot> = {};
  down = false;
  hang = false;
  runStatus = 200;
  exampleInstalls = 0;
  hangingSignals: AbortSignal[] = [];

  readonly fetch = (
    input: RequestInfo | URL,
    init?: RequestInit,
  ): Promise<Response> => {
    const url = String(input);
    const method = (init?.method ?? "GET").toUpperCase();
    this.calls.push({ url, method, body: init?.body });

    if (this.hang) {
      return new Promise<Response>((_, reject) => {
        const signal = init?.signal;
        if (signal) {
          this.hangingSignals.push(signal);
          signal.addEventListener("abort", () =>
            reject(new DOMException("aborted", "AbortError")),
          );
        }
      });
    }
    if (this.down) {
      return Promise.reject(new TypeError("fetch failed"));
    }
    return Promise.resolve(this.route(url, method, init));
  };

  callsTo(fragment: string): RecordedCall[] {
    return this.calls.filter((call) => call.url.includes(fragment));
  }

  private route(url: string, method: string, init?: RequestInit): Response {
    if (url === "/workflows" && method === "GET") {
      return json([...this.names]);
    }

    const run = url.match(/^\/workflow\/run\/([^/?]+)/);
    if (run && method === "GET") {
      const name = decodeURIComponent(run[1]);
      if (this.runStatus !== 200) {
        return json(
          { detail: `workflow '${name}' is already running` },
          this.runStatus,
        );
      }
      return json({ name, status: "started", show: true });
    }

    if (url === "/workflow/example" && method === "POST") {
      this.exampleInstalls += 1;
      if (this.names.includes("workflow-example")) {
        return json({ name: "workflow-example", installed: false });
      }
      this.names.push("workflow-example");
      this.snapshots["workflow-example"] = exampleSnapshot();
      return json({ name: "workflow-example", installed: true, nodes: 5 });
    }

    if (url === "/workflow" && method === "POST") {
      const body = init?.body;
      if (!(body instanceof FormData)) {
        return json({ detail: "expected a multipart upload" }, 400);
      }
      const file = body.get("file");
      if (!(file instanceof File)) {
        return json({ detail: "missing file field" }, 400);
      }
      const name = file.name.replace(/\.(tar|yaml|yml)$/, "");
      if (!this.names.includes(name)) this.names.push(name);
      this.snapshots[name] = { ...exampleSnapshot(), name };
      return json({ name, nodes: 5, warnings: [] });
    }

    const one = url.match(/^\/workflow\/([^/?]+)$/);
    if (one && method === "GET") {
      const name = decodeURIComponent(one[1]);
      const snapshot = this.snapshots[name];
      if (!snapshot) {
        return json({ detail: `no workflow named '${name}'` }, 404);
      }
      return json(snapshot);
    }

    return json({ detail: `unhandled ${method} ${url}` }, 400);
  }
}
