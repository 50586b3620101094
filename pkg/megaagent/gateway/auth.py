from typing import Generator

import httpx


class BearerAuth(httpx.Auth):
    """Adds the provider key to every backend request.

    Args:
        api_key: Provider API key. Empty key sends no header,
            which suits local endpoints.
    """

    def __init__(self, *, api_key: str):
        # See https://www.python-httpx.org/advanced/#customizing-authentication
        self._header = f"Bearer {api_key}" if api_key else ""

    def sync_auth_flow(
        self, request: httpx.Request
    ) -> Generator[httpx.Request, httpx.Response, None]:
        if self._header:
            request.headers["Authorization"] = self._header
        yield request
