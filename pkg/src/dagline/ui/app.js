import { ServiceError, getWorkflow, installExample, listWorkflows, runWorkflow, uploadArchive, } from "./api.js";
import { Poller, createState, runDisabled } from "./state.js";
import { nextSort, renderTable } from "./table.js";
import { renderGraph } from "./graph.js";
function describe(error) {
    if (error instanceof ServiceError)
        return error.detail;
    return "cannot reach the service";
}
function buildLayout(container) {
    container.innerHTML = `
    <header class="topbar">
      <h1>dagline</h1>
      <span id="banner" class="banner hidden">service unreachable, showing last known state</span>
      <button id="run-button" class="run-button" disabled>Run</button>
    </header>
    <div class="layout">
      <aside class="sidebar">
        <h2>Workflows</h2>
        <ul id="workflow-list"></ul>
        <button id="example-button" class="tab">Example</button>
        <form id="upload-form">
          <input id="upload-input" type="file" accept=".tar,.yaml,.yml" />
          <button type="submit">Upload</button>
        </form>
      </aside>
      <main class="content">
        <nav class="view-tabs">
          <span id="workflow-title" class="workflow-title">no workflow selected</span>
          <button id="tab-table" class="tab active">Table</button>
          <button id="tab-graph" class="tab">Graph</button>
        </nav>
        <div id="notice" class="notice hidden"></div>
        <div id="table-view"></div>
        <div id="graph-view" class="hidden"></div>
      </main>
    </div>
  `;
    const get = (id) => container.querySelector(`#${id}`);
    return {
        banner: get("banner"),
        notice: get("notice"),
        runButton: get("run-button"),
        list: get("workflow-list"),
        uploadForm: get("upload-form"),
        uploadInput: get("upload-input"),
        tabTable: get("tab-table"),
        tabGraph: get("tab-graph"),
        exampleButton: get("example-button"),
        tableView: get("table-view"),
        graphView: get("graph-view"),
        title: get("workflow-title"),
    };
}
export class App {
    constructor(container, pollPeriod = 2) {
        this.sort = null;
        this.state = createState(pollPeriod);
        this.ui = buildLayout(container);
        this.poller = new Poller(this.state.pollPeriod, (signal) => this.tick(signal));
        this.ui.runButton.addEventListener("click", () => void this.triggerRun());
        this.ui.exampleButton.addEventListener("click", () => void this.addExample());
        this.ui.uploadForm.addEventListener("submit", (event) => {
            event.preventDefault();
            const file = this.ui.uploadInput.files?.[0];
            if (file)
                void this.upload(file);
        });
        this.ui.tabTable.addEventListener("click", () => this.setMode("table"));
        this.ui.tabGraph.addEventListener("click", () => this.setMode("graph"));
    }
    start() {
        this.poller.start();
    }
    stop() {
        this.poller.stop();
    }
    select(name) {
        if (this.state.selected === name)
            return;
        this.state.selected = name;
        this.state.snapshot = null;
        this.sort = null;
        this.poller.restart();
        this.render();
    }
    setMode(mode) {
        this.state.mode = mode;
        this.render();
    }
    /** One poll: read-only requests, then render whatever is known. */
    async tick(signal) {
        try {
            const names = await listWorkflows(signal);
            this.state.workflows = names;
            if (this.state.selected && names.includes(this.state.selected)) {
                this.state.snapshot = await getWorkflow(this.state.selected, signal);
            }
            else if (this.state.selected) {
                this.state.selected = null;
                this.state.snapshot = null;
            }
            this.state.connected = true;
        }
        catch (error) {
            if (error instanceof Error && error.name === "AbortError")
                return;
            // keep the last snapshot on screen; only the banner changes
            this.state.connected = false;
        }
        this.render();
    }
    async triggerRun() {
        const name = this.state.selected;
        if (name === null || runDisabled(this.state))
            return;
        this.state.runPending = true;
        this.render();
        try {
            const report = await runWorkflow(name);
            this.state.notice = `run of ${report.name} started`;
        }
        catch (error) {
            this.state.notice = describe(error);
        }
        finally {
            this.state.runPending = false;
            this.render();
        }
    }
    async addExample() {
        try {
            const report = await installExample();
            this.state.notice = report.installed
                ? `installed ${report.name}`
                : `${report.name} is already installed`;
            if (!this.state.workflows.includes(report.name)) {
                this.state.workflows = [...this.state.workflows, report.name];
            }
            this.select(report.name);
        }
        catch (error) {
            this.state.notice = describe(error);
        }
        this.render();
    }
    async upload(file) {
        try {
            const report = await uploadArchive(file);
            this.state.notice = `uploaded ${report.name}`;
            this.ui.uploadForm.reset();
            if (!this.state.workflows.includes(report.name)) {
                this.state.workflows = [...this.state.workflows, report.name];
            }
            this.select(report.name);
        }
        catch (error) {
            this.state.notice = describe(error);
        }
        this.render();
    }
    render() {
        const { state, ui } = this;
        ui.banner.classList.toggle("hidden", state.connected);
        ui.notice.classList.toggle("hidden", state.notice === null);
        ui.notice.textContent = state.notice ?? "";
        ui.runButton.disabled = runDisabled(state);
        ui.title.textContent = state.selected ?? "no workflow selected";
        ui.list.replaceChildren(...state.workflows.map((name) => {
            const item = document.createElement("li");
            item.textContent = name;
            item.className = name === state.selected ? "workflow selected" : "workflow";
            item.addEventListener("click", () => this.select(name));
            return item;
        }));
        ui.tabTable.classList.toggle("active", state.mode === "table");
        ui.tabGraph.classList.toggle("active", state.mode === "graph");
        const showGraph = state.mode === "graph" && state.snapshot !== null;
        ui.tableView.classList.toggle("hidden", showGraph);
        ui.graphView.classList.toggle("hidden", !showGraph);
        if (state.snapshot === null) {
            ui.tableView.replaceChildren();
            ui.graphView.replaceChildren();
            return;
        }
        if (showGraph) {
            renderGraph(ui.graphView, state.snapshot.name, Date.now(), () => {
                this.state.mode = "table";
                this.state.notice = "graph view unavailable, showing table";
                this.render();
            });
        }
        else {
            ui.tableView.replaceChildren(renderTable(state.snapshot, this.sort, (column) => {
                this.sort = nextSort(this.sort, column);
                this.render();
            }));
        }
    }
}
export function bootstrap(doc, pollPeriod = 2) {
    const host = doc.getElementById("app");
    if (!host)
        throw new Error("missing #app container");
    const app = new App(host, pollPeriod);
    app.start();
    return app;
}
if (typeof document !== "undefined" && document.getElementById("app")) {
    bootstrap(document);
}
