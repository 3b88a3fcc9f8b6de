"""Clients with one interface over the HTTP API or an in-process engine.

Both return the JSON-shaped dicts the service emits, so callers (the CLI and
the eval harness) do not care which side of the wire the engine is on.
"""

from __future__ import annotations

from typing import Any, Protocol, Sequence

from .model import parse_ts


class ClientError(RuntimeError):
    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class EngineClient(Protocol):
    def ingest(self, owner: str, session_id: str, lines: Sequence[str], idempotency_key: str | None = None) -> dict[str, Any]: ...

    def process(self, owner: str, idempotency_key: str | None = None) -> dict[str, Any]: ...

    def search(self, owner: str, query: str, k: int = 10, *, include_historical: bool | None = None,
               now: str | None = None, session_id: str | None = None) -> dict[str, Any]: ...

    def history(self, owner: str, memory_id: str) -> dict[str, Any]: ...


class HttpClient:
    def __init__(self, base_url: str, timeout: float = 30.0, client=None) -> None:
        import httpx

        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(base_url=self.base_url, timeout=timeout)

    def _call(self, method: str, path: str, *, json: Any = None, headers: dict[str, str] | None = None) -> dict[str, Any]:
        import httpx

        try:
            resp = self._client.request(method, path, json=json, headers=headers)
        except httpx.HTTPError as exc:
            raise ClientError(f"{method} {path}: {exc}") from exc
        if resp.status_code >= 400:
            raise ClientError(f"{method} {path}: HTTP {resp.status_code} {resp.text}", resp.status_code)
        return resp.json()

    @staticmethod
    def _key(idempotency_key: str | None) -> dict[str, str] | None:
        return {"Idempotency-Key": idempotency_key} if idempotency_key else None

    def health(self) -> dict[str, Any]:
        return self._call("GET", "/healthz")

    def ingest(self, owner, session_id, lines, idempotency_key=None):
        body = {"session_id": session_id, "lines": list(lines)}
        return self._call("POST", f"/v1/{owner}/messages", json=body, headers=self._key(idempotency_key))

    def process(self, owner, idempotency_key=None):
        return self._call("POST", f"/v1/{owner}/process", headers=self._key(idempotency_key))

    def search(self, owner, query, k=10, *, include_historical=None, now=None, session_id=None):
        body = {"query": query, "k": k, "include_historical": include_historical, "now": now, "session_id": session_id}
        return self._call("POST", f"/v1/{owner}/search", json=body)

    def history(self, owner, memory_id):
        return self._call("GET", f"/v1/{owner}/memories/{memory_id}/history")


class LocalClient:
    """Drives a MemoryEngine directly; errors surface as ClientError like over HTTP."""

    def __init__(self, engine=None) -> None:
        from .engine import MemoryEngine

        self.engine = engine or MemoryEngine()

    def health(self) -> dict[str, Any]:
        return {"status": "ok"}

    def ingest(self, owner, session_id, lines, idempotency_key=None):
        from .model import MalformedLine

        try:
            recs = self.engine.ingest_messages(owner, session_id, lines, idempotency_key)
        except MalformedLine as exc:
            raise ClientError(str(exc), 400) from exc
        return {"message_ids": [m.id for m in recs]}

    def process(self, owner, idempotency_key=None):
        from .extraction import ExtractorError

        try:
            return self.engine.process_pending(owner, idempotency_key).to_dict()
        except ExtractorError as exc:
            raise ClientError(str(exc), 502) from exc

    def search(self, owner, query, k=10, *, include_historical=None, now=None, session_id=None):
        if k < 1:
            raise ClientError("k must be >= 1", 400)
        result = self.engine.search(
            owner, query, k, now=parse_ts(now) if now else None,
            include_historical=include_historical, session_id=session_id,
        )
        return result.to_dict()

    def history(self, owner, memory_id):
        from .store import NotFound

        try:
            chain = self.engine.history(owner, memory_id)
        except NotFound as exc:
            raise ClientError(f"memory {memory_id} not found", 404) from exc
        return {"memory_id": memory_id, "versions": [r.to_dict() for r in chain]}
