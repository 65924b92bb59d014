"""Small shared utilities."""

import asyncio
from typing import Any, Dict

import requests

DEFAULT_TIMEOUT: float = 10.0


def fetch_json(url: str, timeout: float = DEFAULT_TIMEOUT) -> Dict[str, Any]:
    """Fetch a JSON document from a URL."""
    response = requests.get(url, timeout=timeout)
    response.raise_for_status()
    return response.json()


async def fetch_json_async(url: str) -> Dict[str, Any]:
    """Fetch a JSON document without blocking the event loop."""
    return await asyncio.to_thread(fetch_json, url)


def requires_auth(url: str) -> bool:
    """Report whether the URL needs an authenticated session."""
    ...


def _strip_params(url: str) -> str:
    head, _, _ = url.partition("?")
    return head
