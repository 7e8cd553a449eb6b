"""Synchronous in-process client for the service (no socket, no server)."""

from __future__ import annotations

import asyncio

import httpx


class InProcessClient:
    """Drives the ASGI app directly; mirrors the httpx.Client surface we use."""

    def __init__(self, app):
        self._app = app

    def _request(self, method: str, path: str, **kwargs) -> httpx.Response:
        async def go():
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://catebench") as client:
                return await client.request(method, path, **kwargs)

        return asyncio.run(go())

    def get(self, path: str, **kwargs) -> httpx.Response:
        return self._request("GET", path, **kwargs)

    def post(self, path: str, **kwargs) -> httpx.Response:
        return self._request("POST", path, **kwargs)

    def close(self) -> None:
        pass

    def __enter__(self) -> "InProcessClient":
        return self

    def __exit__(self, *exc) -> bool:
        return False
