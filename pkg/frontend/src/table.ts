import type { WorkflowSnapshot } from "./types.js";

export const TABLE_COLUMNS = [
  "name",
  "status",
  "progress",
  "host",
  "user",
  "kind",
  "command",
] as const;

export type Column = (typeof TABLE_COLUMNS)[number];

// mirrors the colors the service uses in its DOT output
export const STATUS_COLORS: Record<string, string> = {
  undefined: "white",
  ready: "white",
  submitted: "lightblue",
  running: "yellow",
  done: "green",
  failed: "red",
  killed: "orange",
};

export interface Row {
  name: string;
  status: string;
  progress: number;
  host: string;
  user: string;
  kind: string;
  command: string;
}

export interface SortSpec {
  column: Column;
  descending: boolean;
}

export function tableRows(snapshot: WorkflowSnapshot): Row[] {
  return Object.entries(snapshot.nodes).map(([name, node]) => ({
    name,
    status: node.status ?? "undefined",
    progress: node.progress ?? 0,
    host: node.host ?? "",
    user: node.user ?? "",
    kind: node.kind ?? "",
    command: node.script ?? node.exec ?? "",
  }));
}

export function sortRows(rows: Row[], sort: SortSpec | null): Row[] {
  if (!sort) return rows.slice();
  const sign = sort.descending ? -1 : 1;
  return rows
    .map((row, index) => ({ row, index }))
    .sort((a, b) => {
      const left = a.row[sort.column];
      const right = b.row[sort.column];
      let order: number;
      if (typeof left === "number" && typeof right === "number") {
        order = left - right;
      } else {
        order = String(left).localeCompare(String(right));
      }
      return order !== 0 ? sign * order : a.index - b.index;
    })
    .map((entry) => entry.row);
}

export function nextSort(current: SortSpec | null, column: Column): SortSpec {
  if (current && current.column === column) {
    return { column, descending: !current.descending };
  }
  return { column, descending: false };
}

export function renderTable(
  snapshot: WorkflowSnapshot,
  sort: SortSpec | null,
  onSort: (column: Column) => void,
): HTMLTableElement {
  const table = document.createElement("table");
  table.className = "status-table";

  const head = table.createTHead().insertRow();
  for (const column of TABLE_COLUMNS) {
    const cell = document.createElement("th");
    cell.textContent =
      sort && sort.column === column
        ? `${column} ${sort.descending ? "▼" : "▲"}`
        : column;
    cell.dataset.column = column;
    cell.addEventListener("click", () => onSort(column));
    head.appendChild(cell);
  }

  const body = table.createTBody();
  for (const row of sortRows(tableRows(snapshot), sort)) {
    const line = body.insertRow();
    line.dataset.node = row.name;
    for (const column of TABLE_COLUMNS) {
      const cell = line.insertCell();
      cell.textContent = String(row[column]);
      if (column === "status") {
        cell.className = `status status-${row.status}`;
        cell.style.backgroundColor = STATUS_COLORS[row.status] ?? "white";
      }
    }
  }
  return table;
}
