"""Request/response text channels for the pluggable model backends."""

from __future__ import annotations

import json
import os
import re
from typing import Any, Callable, Protocol

import httpx


class ChannelError(RuntimeError):
    """The backend could not be reached or did not answer in time."""


class BackendContractError(ValueError):
    """The backend answered, but not in the agreed shape."""


class TextChannel(Protocol):
    concurrent_safe: bool

    def complete(self, prompt: str, system: str | None = None) -> str: ...


class CallableChannel:
    """Wrap a plain function ``(prompt, system) -> text`` as a channel."""

    def __init__(self, fn: Callable[[str, str | None], str], concurrent_safe: bool = True):
        self.fn = fn
        self.concurrent_safe = concurrent_safe

    def complete(self, prompt: str, system: str | None = None) -> str:
        try:
            return self.fn(prompt, system)
        except (ChannelError, BackendContractError):
            raise
        except Exception as exc:  # anything else counts as transport failure
            raise ChannelError(str(exc)) from exc


class HttpTextChannel:
    """POST a chat-completions style request to ``endpoint``.

    The model name is passed through untouched; the API key (if any) is read
    from the environment variable named by ``api_key_env``.
    """

    concurrent_safe = True

    def __init__(
        self,
        endpoint: str,
        model: str,
        timeout: float = 60.0,
        api_key_env: str | None = None,
        max_tokens: int = 4096,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.api_key_env = api_key_env
        self.max_tokens = max_tokens
        self.client = client or httpx.Client(timeout=timeout)

    def complete(self, prompt: str, system: str | None = None) -> str:
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": prompt})
        headers = {}
        if self.api_key_env and os.environ.get(self.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[self.api_key_env]}"
        body = {"model": self.model, "messages": messages, "temperature": 0, "max_tokens": self.max_tokens}
        try:
            resp = self.client.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise ChannelError(f"{self.endpoint}: {exc}") from exc
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendContractError(f"unexpected completion payload: {str(data)[:200]}") from exc


_FENCE = re.compile(r"^```(?:json)?\s*|\s*```$", re.MULTILINE)


def extract_json(text: str) -> Any:
    """Parse the JSON object in a model reply, tolerating code fences."""
    stripped = _FENCE.sub("", text.strip()).strip()
    try:
        return json.loads(stripped)
    except json.JSONDecodeError:
        pass
    start = stripped.find("{")
    end = stripped.rfind("}")
    if start != -1 and end > start:
        try:
            return json.loads(stripped[start : end + 1])
        except json.JSONDecodeError:
            pass
    raise BackendContractError(f"reply is not JSON: {text[:200]!r}")
