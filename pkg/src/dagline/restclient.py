"""Thin HTTP client for the service, mirroring its six endpoints.

Used by the CLI's service mode and by tests; anything the service can do
over REST is reachable through this class with plain Python values.
"""

from __future__ import annotations

from pathlib import Path

import requests

from .errors import WorkflowError


class ServiceError(WorkflowError):
    """An HTTP endpoint answered with an error status."""

    def __init__(self, status_code: int, detail: str):
        super().__init__(f"{status_code}: {detail}")
        self.status_code = status_code
        self.detail = detail


class WorkflowServiceClient:
    def __init__(self, base_url: str = "http://127.0.0.1:8000", timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _request(self, method: str, path: str, **kwargs):
        kwargs.setdefault("timeout", self.timeout)
        response = requests.request(method, f"{self.base_url}{path}", **kwargs)
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ServiceError(response.status_code, str(detail))
        return response.json()

    def list_workflows(self) -> list[str]:
        return self._request("GET", "/workflows")

    def upload_workflow(self, archive: Path | str, name: str | None = None) -> dict:
        """Upload a workflow archive (or YAML) as a multipart body."""
        archive = Path(archive)
        params = {"name": name} if name else {}
        with archive.open("rb") as payload:
            return self._request(
                "POST",
                "/workflow",
                params=params,
                files={"file": (archive.name, payload)},
            )

    def upload_workflow_path(self, archive: Path | str, name: str | None = None) -> dict:
        """Install a workflow from a path readable by the server itself."""
        params = {"archive": str(archive)}
        if name:
            params["name"] = name
        return self._request("POST", "/workflow", params=params)

    def get_workflow(self, name: str, job: str | None = None) -> dict:
        params = {"job": job} if job else {}
        return self._request("GET", f"/workflow/{name}", params=params)

    def delete_workflow(self, name: str, job: str | None = None) -> dict:
        params = {"job": job} if job else {}
        return self._request("DELETE", f"/workflow/{name}", params=params)

    def add_job(self, workflow_name: str, name: str, **fields) -> dict:
        return self._request(
            "POST", f"/workflow/{workflow_name}/job", json={"name": name, **fields}
        )

    def run_workflow(self, name: str, show: bool = True) -> dict:
        return self._request(
            "GET", f"/workflow/run/{name}", params={"show": str(show).lower()}
        )

    def install_example(self) -> dict:
        return self._request("POST", "/workflow/example")
