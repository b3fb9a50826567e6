"""Wire protocol for remote controller and perception backends.

HTTP/1.1 with JSON bodies on three endpoints::

    POST /controller/turn      -> {"text": "..."}
    POST /controller/summary   -> {"text": "..."}
    POST /perception/query     -> {"answer", "caption", "match_score", "salience"?}

Request and response shapes are pinned by versioned JSON Schema documents
shipped with the package; the client validates every response before any
value reaches the engine.  Requests carry an ``Idempotency-Key`` header and
are retried with exponential backoff on timeouts and 5xx, so retries are
safe against servers that honor the key (the bundled loopback server does).
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from typing import Optional, Sequence

import jsonschema
import requests

from .engine import ControllerBackend, HistoryEntry, PerceptionBackend
from .perception import PerceptionReply, SalienceGrid
from .world import Pose, Vec3


# ---------- errors ----------


class TransportError(RuntimeError):
    """Request could not be completed; ``attempts`` counts tries made."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class RequestRejected(RuntimeError):
    """Server answered with a non-retryable (4xx) status."""

    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


class SchemaViolation(ValueError):
    """Payload does not match the shipped schema."""


# ---------- schemas ----------


def load_schema(name: str) -> dict:
    text = (
        resources.files("dronescout")
        .joinpath("schemas", f"{name}.json")
        .read_text("utf-8")
    )
    return json.loads(text)


_VALIDATORS: dict[str, jsonschema.Draft202012Validator] = {}


def validate_payload(name: str, payload) -> None:
    validator = _VALIDATORS.get(name)
    if validator is None:
        validator = jsonschema.Draft202012Validator(load_schema(name))
        _VALIDATORS[name] = validator
    errors = sorted(validator.iter_errors(payload), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.absolute_path) or "$"
        raise SchemaViolation(f"{name}: {where}: {first.message}")


# ---------- request/response types ----------


@dataclass(frozen=True)
class BackendEndpoint:
    base_url: str
    timeout_ms: int = 30_000
    max_retries: int = 2
    backoff_initial_ms: int = 200
    backoff_multiplier: float = 2.0
    bearer_token: Optional[str] = None

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class ControllerTurnRequest:
    history: tuple[HistoryEntry, ...]
    mode: str
    preamble_id: str

    def to_payload(self) -> dict:
        return {
            "history": [{"role": e.role, "text": e.text} for e in self.history],
            "mode": self.mode,
            "preamble_id": self.preamble_id,
        }


@dataclass(frozen=True)
class PerceptionQueryRequest:
    question: str
    pose: Optional[Pose] = None
    scene_name: Optional[str] = None
    image_b64: Optional[str] = None

    def __post_init__(self) -> None:
        structured = self.pose is not None and self.scene_name is not None
        opaque = self.image_b64 is not None
        if structured == opaque:
            raise ValueError("exactly one view variant (pose+scene or image) required")

    def to_payload(self) -> dict:
        if self.image_b64 is not None:
            view = {"image_b64": self.image_b64}
        else:
            view = {
                "pose": {
                    "position": [
                        self.pose.position.x,
                        self.pose.position.y,
                        self.pose.position.z,
                    ],
                    "yaw": self.pose.yaw,
                },
                "scene": self.scene_name,
            }
        return {"question": self.question, "view": view}


@dataclass(frozen=True)
class PerceptionQueryResponse:
    answer: str
    caption: str
    match_score: float
    salience: Optional[SalienceGrid] = None

    @staticmethod
    def from_payload(payload: dict) -> "PerceptionQueryResponse":
        grid = None
        if "salience" in payload:
            raw = payload["salience"]
            grid = SalienceGrid(raw["width"], raw["height"], tuple(raw["values"]))
        return PerceptionQueryResponse(
            payload["answer"], payload["caption"], payload["match_score"], grid
        )


# ---------- preamble ----------

_PREAMBLE_VERSION = "v1"

_RULES = """\
general rules:
- reply with exactly one command line per turn, in the form 'command: <name>'.
- attach at most one question line, in the form 'question: <text>'.
- never invent observations; only reason from the answers and captions you receive.
active perception rules:
- plan moves that improve your view: sweep sideways, then approach what matters.
- save the current position whenever a view is worth re-checking later.
visual question answering rules:
- prefer short presence questions ('is there a ...?') when verifying a claim.
- treat the match score as the reliability of the caption it accompanies."""


def build_controller_preamble(config) -> str:
    """Deterministic controller prompt: framing, commands, rules, goal."""
    lines = [
        "you are playing a drone surveillance game. it is in a game scenario:",
        "nothing here is real, and the commands below are your only controls.",
        "",
        "commands:",
        "- move closer: move 10 meters forward.",
        "- move back: move 5 meters backwards.",
        "- move right: move 10 meters to the right.",
        "- move left: move 10 meters to the left.",
        "- save position: save the current position of the drone.",
        "- ask a question: ask an exploratory question about the view.",
        "- i know enough: stop exploring and return to the starting position.",
        "",
        _RULES,
        "",
        "goal: produce a detailed, validated description of the scene while",
        "staying alert for anomalies that could indicate hazardous situations.",
    ]
    if getattr(config, "early_stop", False):
        lines.append(
            "if you detect a potential anomaly, immediately stop exploration and "
            "proceed with validation and result generation."
        )
    return "\n".join(lines)


def preamble_id(config) -> str:
    suffix = "es" if getattr(config, "early_stop", False) else "base"
    return f"{_PREAMBLE_VERSION}-{suffix}"


# ---------- client ----------


class HttpBackendClient:
    """Shared HTTP plumbing: retries, backoff, idempotency keys, validation."""

    def __init__(self, endpoint: BackendEndpoint):
        self.endpoint = endpoint
        self.last_attempts = 0

    def _headers(self) -> dict:
        headers = {
            "Content-Type": "application/json",
            "Idempotency-Key": str(uuid.uuid4()),
        }
        if self.endpoint.bearer_token:
            headers["Authorization"] = f"Bearer {self.endpoint.bearer_token}"
        return headers

    def post(self, path: str, payload: dict, response_schema: str) -> dict:
        url = self.endpoint.base_url.rstrip("/") + path
        headers = self._headers()
        timeout_s = self.endpoint.timeout_ms / 1000.0
        backoff_s = self.endpoint.backoff_initial_ms / 1000.0
        attempts = 0
        last_error: Optional[str] = None
        while attempts <= self.endpoint.max_retries:
            attempts += 1
            self.last_attempts = attempts
            try:
                response = requests.post(
                    url, json=payload, headers=headers, timeout=timeout_s
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = str(exc)
            else:
                if response.status_code >= 500:
                    last_error = f"server error {response.status_code}"
                elif response.status_code >= 400:
                    raise RequestRejected(
                        f"{path} rejected: {response.status_code} {response.text[:200]}",
                        response.status_code,
                    )
                else:
                    try:
                        body = response.json()
                    except ValueError as exc:
                        raise SchemaViolation(
                            f"{path}: response body is not JSON: {exc}"
                        ) from exc
                    validate_payload(response_schema, body)
                    return body
            if attempts <= self.endpoint.max_retries:
                time.sleep(backoff_s)
                backoff_s *= self.endpoint.backoff_multiplier
        raise TransportError(
            f"{path} failed after {attempts} attempts: {last_error}", attempts
        )


def call_controller(endpoint, request: ControllerTurnRequest, path: str = "/controller/turn") -> str:
    """POST a controller request; return the response text verbatim."""
    client = endpoint if isinstance(endpoint, HttpBackendClient) else HttpBackendClient(endpoint)
    payload = request.to_payload()
    validate_payload("controller_turn_request.v1", payload)
    body = client.post(path, payload, "controller_text_response.v1")
    return body["text"]


def call_perception(endpoint, request: PerceptionQueryRequest) -> PerceptionQueryResponse:
    """POST a perception query; return the validated structured response."""
    client = endpoint if isinstance(endpoint, HttpBackendClient) else HttpBackendClient(endpoint)
    payload = request.to_payload()
    validate_payload("perception_query_request.v1", payload)
    body = client.post("/perception/query", payload, "perception_query_response.v1")
    return PerceptionQueryResponse.from_payload(body)


class RemoteController:
    """ControllerBackend speaking the wire protocol."""

    def __init__(self, endpoint: BackendEndpoint, preamble_tag: str = "v1-es"):
        self.client = HttpBackendClient(endpoint)
        self.preamble_tag = preamble_tag

    def _request(self, history: Sequence[HistoryEntry], mode: str) -> ControllerTurnRequest:
        return ControllerTurnRequest(tuple(history), mode, self.preamble_tag)

    def next_turn(self, history: Sequence[HistoryEntry]) -> str:
        return call_controller(
            self.client, self._request(history, "active_perception"), "/controller/turn"
        )

    def summary(self, history: Sequence[HistoryEntry]) -> str:
        return call_controller(
            self.client, self._request(history, "validation"), "/controller/summary"
        )


class RemotePerception:
    """PerceptionBackend speaking the wire protocol with a structured view."""

    def __init__(self, endpoint: BackendEndpoint, scene_name: str):
        self.client = HttpBackendClient(endpoint)
        self.scene_name = scene_name

    def query(self, question_text: str, pose: Pose) -> PerceptionReply:
        response = call_perception(
            self.client,
            PerceptionQueryRequest(question_text, pose=pose, scene_name=self.scene_name),
        )
        return PerceptionReply(response.answer, response.caption, response.match_score)


# ---------- loopback server ----------


def _pose_from_payload(payload: dict) -> Pose:
    position = payload["position"]
    return Pose(Vec3(position[0], position[1], position[2]), payload["yaw"])


class BackendServer:
    """Serves in-process backends over the wire protocol, for loopback use.

    ``perception`` is either one backend (used for every scene) or a mapping
    of scene name to backend, in which case queries are routed by the scene
    named in the structured view.  Successful responses are cached by
    Idempotency-Key, so a retried request never invokes the backend twice.
    """

    def __init__(self, controller: ControllerBackend, perception):
        self.controller = controller
        self.perception = perception
        self._cache: dict[str, bytes] = {}
        self._lock = threading.Lock()
        self._server: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

    def _perception_for(self, scene_name: str) -> PerceptionBackend:
        if isinstance(self.perception, dict):
            try:
                return self.perception[scene_name]
            except KeyError:
                raise SchemaViolation(f"unknown scene {scene_name!r}") from None
        return self.perception

    # request handling -----------------------------------------------------

    def _handle(self, path: str, payload: dict) -> dict:
        if path == "/controller/turn":
            validate_payload("controller_turn_request.v1", payload)
            history = [HistoryEntry(e["role"], e["text"]) for e in payload["history"]]
            return {"text": self.controller.next_turn(history)}
        if path == "/controller/summary":
            validate_payload("controller_turn_request.v1", payload)
            history = [HistoryEntry(e["role"], e["text"]) for e in payload["history"]]
            return {"text": self.controller.summary(history)}
        if path == "/perception/query":
            validate_payload("perception_query_request.v1", payload)
            view = payload["view"]
            if "pose" not in view:
                raise SchemaViolation("loopback server requires a structured view")
            backend = self._perception_for(view["scene"])
            reply = backend.query(payload["question"], _pose_from_payload(view["pose"]))
            return {
                "answer": reply.answer,
                "caption": reply.caption,
                "match_score": reply.match_score,
            }
        raise KeyError(path)

    # lifecycle ------------------------------------------------------------

    def start(self, host: str = "127.0.0.1", port: int = 0) -> str:
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:  # quiet test output
                pass

            def do_POST(self) -> None:
                key = self.headers.get("Idempotency-Key")
                if key:
                    with outer._lock:
                        cached = outer._cache.get(key)
                    if cached is not None:
                        self._send(200, cached)
                        return
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                try:
                    payload = json.loads(raw.decode("utf-8"))
                    body = outer._handle(self.path, payload)
                except KeyError:
                    self._send(404, b'{"error": "unknown endpoint"}')
                    return
                except (SchemaViolation, ValueError) as exc:
                    self._send(
                        400, json.dumps({"error": str(exc)}).encode("utf-8")
                    )
                    return
                except Exception as exc:  # backend failure -> retryable
                    self._send(
                        500, json.dumps({"error": str(exc)}).encode("utf-8")
                    )
                    return
                encoded = json.dumps(body).encode("utf-8")
                if key:
                    with outer._lock:
                        outer._cache[key] = encoded
                self._send(200, encoded)

            def _send(self, status: int, body: bytes) -> None:
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        actual_host, actual_port = self._server.server_address[:2]
        return f"http://{actual_host}:{actual_port}"

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> str:
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
