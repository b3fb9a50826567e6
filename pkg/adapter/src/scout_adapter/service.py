"""FastAPI service exposing real models behind the dronescout wire protocol.

Endpoints mirror the primary protocol exactly; every response is validated
against the shared JSON Schemas before leaving the service.  Upstream
failures surface as 502 with a structured body whose ``code`` separates
transport failures (``upstream_failure``) from shape violations
(``upstream_invalid``).
"""

from __future__ import annotations

import sys

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import AdapterConfig, config_from_env
from .normalize import normalize_summary_text, normalize_turn_text
from .schemas import SchemaViolation, validate
from .upstream import CaptionerClient, ChatCompletionClient, UpstreamFailure, UpstreamInvalid

SUMMARY_INSTRUCTION = (
    "exploration is over. reply with exactly one 'description:' line, one "
    "'caption:' line, and one 'validate: <fact>' line per claim you want "
    "re-checked."
)


def _chat_messages(preamble: str, history: list[dict], extra: str = "") -> list[dict]:
    messages = [{"role": "system", "content": preamble}]
    for entry in history:
        role = "assistant" if entry["role"] == "controller" else "user"
        messages.append({"role": role, "content": entry["text"]})
    if extra:
        messages.append({"role": "user", "content": extra})
    return messages


def _clamp01(value: float) -> float:
    return min(1.0, max(0.0, value))


def create_app(config: AdapterConfig, chat_client=None, captioner_client=None) -> FastAPI:
    """App factory; clients are injectable for tests."""
    chat = chat_client if chat_client is not None else ChatCompletionClient(config)
    captioner = (
        captioner_client if captioner_client is not None else CaptionerClient(config)
    )
    app = FastAPI(title="dronescout-adapter", docs_url=None, redoc_url=None)
    span = config.similarity_max - config.similarity_min

    def _error(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(
            status_code=status, content={"error": {"code": code, "message": message}}
        )

    async def _controller(request: Request, normalizer) -> JSONResponse:
        payload = await request.json()
        try:
            validate("controller_turn_request.v1", payload)
        except SchemaViolation as exc:
            return _error(400, "bad_request", str(exc))
        extra = SUMMARY_INSTRUCTION if normalizer is normalize_summary_text else ""
        try:
            raw = chat.complete(_chat_messages(config.preamble, payload["history"], extra))
        except UpstreamFailure as exc:
            return _error(502, "upstream_failure", str(exc))
        except UpstreamInvalid as exc:
            return _error(502, "upstream_invalid", str(exc))
        body = {"text": normalizer(raw)}
        validate("controller_text_response.v1", body)
        return JSONResponse(content=body)

    @app.post("/controller/turn")
    async def controller_turn(request: Request):
        return await _controller(request, normalize_turn_text)

    @app.post("/controller/summary")
    async def controller_summary(request: Request):
        return await _controller(request, normalize_summary_text)

    @app.post("/perception/query")
    async def perception_query(request: Request):
        payload = await request.json()
        try:
            validate("perception_query_request.v1", payload)
        except SchemaViolation as exc:
            return _error(400, "bad_request", str(exc))
        view = payload["view"]
        if "image_b64" not in view:
            return _error(
                400,
                "bad_request",
                "this adapter serves real images; structured scene views belong "
                "to the synthetic backend",
            )
        try:
            upstream = captioner.query(view["image_b64"], payload["question"])
        except UpstreamFailure as exc:
            return _error(502, "upstream_failure", str(exc))
        except UpstreamInvalid as exc:
            return _error(502, "upstream_invalid", str(exc))
        score = _clamp01((float(upstream["similarity"]) - config.similarity_min) / span)
        body = {
            "answer": str(upstream["answer"]),
            "caption": str(upstream["caption"]),
            "match_score": score,
        }
        try:
            validate("perception_query_response.v1", body)
        except SchemaViolation as exc:
            return _error(502, "upstream_invalid", str(exc))
        return JSONResponse(content=body)

    return app


def main() -> int:
    import uvicorn

    try:
        config = config_from_env()
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    uvicorn.run(create_app(config), host="0.0.0.0", port=8089)
    return 0


if __name__ == "__main__":
    sys.exit(main())
