"""Clients for the upstream models.

The chat client speaks the common chat-completions shape
(``POST {base}/chat/completions``).  The captioner client speaks a minimal
vision-QA shape: ``POST {base}/vqa`` with ``{model, image_b64, question}``
returning ``{answer, caption, similarity}`` where similarity is a raw
image-text score in the configured range.
"""

from __future__ import annotations

from typing import Optional

import httpx

from .config import AdapterConfig


class UpstreamFailure(RuntimeError):
    """The upstream call failed (network, timeout, HTTP error)."""


class UpstreamInvalid(RuntimeError):
    """The upstream answered, but not in the expected shape."""


def _headers(api_key: Optional[str]) -> dict:
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    return headers


class ChatCompletionClient:
    def __init__(self, config: AdapterConfig):
        self.config = config

    def complete(self, messages: list[dict]) -> str:
        try:
            response = httpx.post(
                self.config.llm_base_url.rstrip("/") + "/chat/completions",
                json={"model": self.config.llm_model, "messages": messages},
                headers=_headers(self.config.llm_api_key),
                timeout=self.config.timeout_ms / 1000.0,
            )
            response.raise_for_status()
            body = response.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise UpstreamFailure(f"chat completion failed: {exc}") from exc
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise UpstreamInvalid(f"unexpected chat completion shape: {exc}") from exc


class CaptionerClient:
    def __init__(self, config: AdapterConfig):
        self.config = config

    def query(self, image_b64: str, question: str) -> dict:
        try:
            response = httpx.post(
                self.config.captioner_base_url.rstrip("/") + "/vqa",
                json={
                    "model": self.config.captioner_model,
                    "image_b64": image_b64,
                    "question": question,
                },
                headers=_headers(self.config.captioner_api_key),
                timeout=self.config.timeout_ms / 1000.0,
            )
            response.raise_for_status()
            body = response.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise UpstreamFailure(f"captioner call failed: {exc}") from exc
        if not isinstance(body, dict) or not {"answer", "caption", "similarity"} <= set(body):
            raise UpstreamInvalid("captioner response missing answer/caption/similarity")
        if not isinstance(body["similarity"], (int, float)):
            raise UpstreamInvalid("captioner similarity is not numeric")
        return body
