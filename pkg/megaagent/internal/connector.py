import logging
import time
from typing import Any, Optional

import httpx

from megaagent.__version__ import __version__

from ..error import BackendUnavailableError, MegaAgentError

logger = logging.getLogger(__name__)

_BASIC_HEADERS = {
    "User-Agent": f"megaagent/v{__version__}",
    "Content-Type": "application/json",
}


class HTTPConnector:
    """Connector performing round trips to a model provider.

    Transport failures are retried with exponential backoff:
    attempt ``i`` (from zero) is followed by a ``backoff_base * 2**i`` pause.
    """

    def __init__(
        self,
        *,
        auth: Optional[httpx.Auth],
        ssl_verify: bool,
        timeouts,
        limits,
        retry: int,
        backoff_base: float,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self._client = httpx.Client(
            auth=auth,
            verify=ssl_verify,
            headers=_BASIC_HEADERS,
            timeout=timeouts._as_httpx_timeouts(),
            limits=limits._as_httpx_limits(),
            transport=transport,
        )
        self._retry = max(1, retry)
        self._backoff_base = backoff_base

    def __enter__(self) -> "HTTPConnector":
        self._client.__enter__()
        return self

    def __exit__(
        self,
        exc_type=None,
        exc_value=None,
        traceback=None,
    ) -> None:
        self._client.__exit__(exc_type, exc_value, traceback)

    def close(self) -> None:
        """Close client and release connections."""
        self._client.close()

    def do_post(self, url: str, json: Any = None, **kwargs) -> httpx.Response:
        """POST a JSON body.

        Chat-completion requests are not idempotent in billing terms, but
        a transport failure means the provider never answered, so they are
        retried like idempotent ones.

        Raise:
            :class:`~megaagent.error.BackendUnavailableError`: Every attempt
                failed in transport.
            :class:`~megaagent.error.MegaAgentError`: Provider answered
                with an error status.
        """
        req = self._client.build_request("POST", url=url, json=json, **kwargs)

        last_exp: Optional[Exception] = None
        for attempt in range(self._retry):
            try:
                resp = self._client.send(request=req)
            except httpx.TimeoutException as exp:
                # Handle httpx.TimeoutException separately
                # because it doesn't have an exception message.
                last_exp = MegaAgentError("request timeout", exp)
            except httpx.TransportError as exp:
                last_exp = exp
            else:
                if not resp.is_success:
                    raise MegaAgentError(
                        f"unexpected response status code: {resp.status_code}. "
                        f"Response body: {resp.text}"
                    )
                return resp

            if attempt + 1 < self._retry:
                delay = self._backoff_base * (2**attempt)
                logger.warning(
                    "model backend transport error (attempt %d/%d), retry in %.2fs: %s",
                    attempt + 1,
                    self._retry,
                    delay,
                    last_exp,
                )
                time.sleep(delay)

        raise BackendUnavailableError(
            f"backend unavailable after {self._retry} attempts", last_exp
        )
