import type { InstallReport, RunReport, WorkflowSnapshot } from "./types.js";

export class ServiceError extends Error {
  constructor(public readonly status: number, public readonly detail: string) {
    super(detail);
    this.name = "ServiceError";
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(path, init);
  let body: unknown = null;
  try {
    body = await response.json();
  } catch {
    body = null;
  }
  if (!response.ok) {
    const detail =
      body && typeof body === "object" && "detail" in body
        ? String((body as { detail: unknown }).detail)
        : `${response.status} ${response.statusText}`;
    throw new ServiceError(response.status, detail);
  }
  return body as T;
}

export function listWorkflows(signal?: AbortSignal): Promise<string[]> {
  return request("/workflows", { signal });
}

export function getWorkflow(
  name: string,
  signal?: AbortSignal,
): Promise<WorkflowSnapshot> {
  return request(`/workflow/${encodeURIComponent(name)}`, { signal });
}

// the run trigger is a GET by contract
export function runWorkflow(name: string): Promise<RunReport> {
  return request(`/workflow/run/${encodeURIComponent(name)}`);
}

export function installExample(): Promise<InstallReport> {
  return request("/workflow/example", { method: "POST" });
}

export function uploadArchive(file: File): Promise<InstallReport> {
  const form = new FormData();
  form.append("file", file, file.name);
  return request("/workflow", { method: "POST", body: form });
}

export function graphUrl(name: string, stamp: number): string {
  return `/workflow/${encodeURIComponent(name)}/graph?t=${stamp}`;
}
