export type NodeStatus =
  | "undefined"
  | "ready"
  | "submitted"
  | "running"
  | "done"
  | "failed"
  | "killed";

export interface WorkflowNode {
  name: string;
  status?: NodeStatus;
  progress?: number;
  user?: string;
  host?: string;
  kind?: string;
  label?: string;
  script?: string;
  exec?: string;
  shape?: string;
  style?: string;
  venv?: string;
}

export interface WorkflowSnapshot {
  name: string;
  nodes: Record<string, WorkflowNode>;
  dependencies: string[];
  errors?: Record<string, string>;
}

export interface InstallReport {
  name: string;
  nodes?: number;
  warnings?: string[];
  installed?: boolean;
}

export interface RunReport {
  name: string;
  status: string;
  show: boolean;
}
