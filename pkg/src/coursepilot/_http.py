"""Minimal JSON-over-HTTP helper with exponential-backoff retries.

Both the embedding and chat-completion providers speak OpenAI-compatible
endpoints; this is the single place their transport behavior lives.
Tests monkeypatch ``post_json`` to script provider behavior.
"""

from __future__ import annotations

import logging
import time
from typing import Any, Callable

import requests

from .errors import ProviderContractError, RetriableProviderError

logger = logging.getLogger(__name__)

MAX_RETRIES = 3
BACKOFF_BASE_SECONDS = 0.25
DEFAULT_TIMEOUT_SECONDS = 60.0

# Indirection so tests can stub the backoff delay.
_SLEEP: Callable[[float], None] = time.sleep


def post_json(url: str, payload: dict[str, Any], timeout: float = DEFAULT_TIMEOUT_SECONDS) -> dict[str, Any]:
    """POST a JSON body and return the decoded JSON response.

    Raises requests exceptions on transport failure; the retry wrapper
    below classifies them.
    """
    resp = requests.post(url, json=payload, timeout=timeout)
    resp.raise_for_status()
    return resp.json()


def post_with_retries(
    url: str,
    payload: dict[str, Any],
    sleep: Callable[[float], None] | None = None,
) -> dict[str, Any]:
    """POST with up to MAX_RETRIES retries on transport/5xx failures.

    Client errors (4xx) and undecodable bodies are contract violations and
    are not retried.
    """
    sleep = _SLEEP if sleep is None else sleep
    last_error: Exception | None = None
    for attempt in range(MAX_RETRIES + 1):
        try:
            return post_json(url, payload)
        except requests.HTTPError as exc:
            status = exc.response.status_code if exc.response is not None else None
            if status is not None and 400 <= status < 500 and status != 429:
                raise ProviderContractError(f"provider returned HTTP {status} for {url}") from exc
            last_error = exc
        except ValueError as exc:  # undecodable JSON body
            raise ProviderContractError(f"provider returned non-JSON body from {url}") from exc
        except requests.RequestException as exc:
            last_error = exc
        if attempt < MAX_RETRIES:
            delay = BACKOFF_BASE_SECONDS * (2**attempt)
            logger.warning("provider call failed (%s), retrying in %.2fs", last_error, delay)
            sleep(delay)
    raise RetriableProviderError(f"provider unreachable after {MAX_RETRIES} retries: {url}") from last_error
