export class ServiceError extends Error {
    constructor(status, detail) {
        super(detail);
        this.status = status;
        this.detail = detail;
        this.name = "ServiceError";
    }
}
async function request(path, init) {
    const response = await fetch(path, init);
    let body = null;
    try {
        body = await response.json();
    }
    catch {
        body = null;
    }
    if (!response.ok) {
        const detail = body && typeof body === "object" && "detail" in body
            ? String(body.detail)
            : `${response.status} ${response.statusText}`;
        throw new ServiceError(response.status, detail);
    }
    return body;
}
export function listWorkflows(signal) {
    return request("/workflows", { signal });
}
export function getWorkflow(name, signal) {
    return request(`/workflow/${encodeURIComponent(name)}`, { signal });
}
// the run trigger is a GET by contract
export function runWorkflow(name) {
    return request(`/workflow/run/${encodeURIComponent(name)}`);
}
export function installExample() {
    return request("/workflow/example", { method: "POST" });
}
export function uploadArchive(file) {
    const form = new FormData();
    form.append("file", file, file.name);
    return request("/workflow", { method: "POST", body: form });
}
export function graphUrl(name, stamp) {
    return `/workflow/${encodeURIComponent(name)}/graph?t=${stamp}`;
}
