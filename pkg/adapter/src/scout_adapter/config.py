"""Adapter configuration, read from environment variables.

Required:
  SCOUT_LLM_BASE_URL        chat-completion API base (OpenAI-compatible)
  SCOUT_LLM_MODEL           chat model name
  SCOUT_CAPTIONER_BASE_URL  vision question-answering API base
  SCOUT_CAPTIONER_MODEL     captioner model identifier
Optional:
  SCOUT_LLM_API_KEY         bearer token for the chat API
  SCOUT_CAPTIONER_API_KEY   bearer token for the captioner API
  SCOUT_PREAMBLE_PATH       file overriding the built-in controller preamble
  SCOUT_TIMEOUT_MS          upstream timeout (default 30000)
  SCOUT_SIMILARITY_MIN/MAX  raw similarity range mapped onto [0, 1]
                            (default -1 .. 1)
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


def _default_preamble() -> str:
    from dronescout.engine import EpisodeConfig
    from dronescout.protocol import build_controller_preamble

    return build_controller_preamble(EpisodeConfig())


@dataclass(frozen=True)
class AdapterConfig:
    llm_base_url: str
    llm_model: str
    captioner_base_url: str
    captioner_model: str
    llm_api_key: Optional[str] = None
    captioner_api_key: Optional[str] = None
    preamble: str = field(default_factory=_default_preamble)
    timeout_ms: int = 30_000
    similarity_min: float = -1.0
    similarity_max: float = 1.0

    def __post_init__(self) -> None:
        for name in ("llm_base_url", "llm_model", "captioner_base_url", "captioner_model"):
            if not getattr(self, name):
                raise ValueError(f"adapter config missing {name}")
        if self.similarity_max <= self.similarity_min:
            raise ValueError("similarity_max must exceed similarity_min")


def config_from_env(env=os.environ) -> AdapterConfig:
    preamble_path = env.get("SCOUT_PREAMBLE_PATH")
    kwargs = {}
    if preamble_path:
        kwargs["preamble"] = Path(preamble_path).read_text(encoding="utf-8")
    return AdapterConfig(
        llm_base_url=env.get("SCOUT_LLM_BASE_URL", ""),
        llm_model=env.get("SCOUT_LLM_MODEL", ""),
        captioner_base_url=env.get("SCOUT_CAPTIONER_BASE_URL", ""),
        captioner_model=env.get("SCOUT_CAPTIONER_MODEL", ""),
        llm_api_key=env.get("SCOUT_LLM_API_KEY"),
        captioner_api_key=env.get("SCOUT_CAPTIONER_API_KEY"),
        timeout_ms=int(env.get("SCOUT_TIMEOUT_MS", "30000")),
        similarity_min=float(env.get("SCOUT_SIMILARITY_MIN", "-1")),
        similarity_max=float(env.get("SCOUT_SIMILARITY_MAX", "1")),
        **kwargs,
    )
