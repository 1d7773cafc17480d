"""Text-generation backends behind one interface.

Four kinds: ``http`` (chat-completions JSON over POST), ``template`` (a
deterministic rule-based generator, so every pipeline runs offline), ``mock``
(scripted responses for tests), and ``replay`` (serve from a recorded cache).
Any non-replay backend can record to a cache; cache keys hash the request
content and model but never the freeform tag.

Secrets: a spec names the *environment variable* holding a bearer token; the
token value itself is read at call time and never stored, logged, or
serialized.
"""

from __future__ import annotations

import dataclasses
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Final

import requests

from . import banks
from .errors import BackendError, ConfigError
from .seeding import seeded_rng
from .taxonomy import CoachMove

__all__ = [
    "SamplingParams",
    "ChatMessage",
    "GenerationRequest",
    "GenerationResponse",
    "BackendSpec",
    "BackendTimeout",
    "HttpStatusError",
    "MalformedResponse",
    "AuthMissing",
    "CacheMiss",
    "PRESETS",
    "preset_sampling",
    "request_hash",
    "build_backend",
    "complete",
    "record_replay",
]

BACKEND_KINDS: Final[tuple[str, ...]] = ("http", "template", "mock", "replay")


class BackendTimeout(BackendError):
    """The endpoint did not answer within the per-request timeout."""


class HttpStatusError(BackendError):
    def __init__(self, status: int, detail: str = "") -> None:
        super().__init__(f"HTTP {status}{': ' + detail if detail else ''}")
        self.status = status


class MalformedResponse(BackendError):
    """Response body is not the expected chat-completions shape."""


class AuthMissing(BackendError):
    """The configured token environment variable is not set."""


class CacheMiss(BackendError):
    """Replay cache has no entry for the request."""


@dataclass(frozen=True, slots=True)
class SamplingParams:
    temperature: float = 0.0
    top_p: float = 1.0
    top_k: int | None = None
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ConfigError("top_p must be in (0, 1]")
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError("top_k must be >= 1 when set")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")


# Named sampling presets for commonly benchmarked model families.
PRESETS: Final[dict[str, SamplingParams]] = {
    "qwen3-thinking": SamplingParams(temperature=0.6, top_p=0.95, top_k=20),
    "qwen3-instruct": SamplingParams(temperature=0.7, top_p=0.8),
    "gpt-oss": SamplingParams(temperature=1.0, top_p=1.0),
    "phi4": SamplingParams(temperature=0.8, top_p=0.95),
}


def preset_sampling(name: str) -> SamplingParams:
    if name not in PRESETS:
        raise ConfigError(f"unknown sampling preset {name!r}; have {sorted(PRESETS)}")
    return PRESETS[name]


@dataclass(frozen=True, slots=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True, slots=True)
class GenerationRequest:
    messages: tuple[ChatMessage, ...]
    sampling: SamplingParams = SamplingParams()
    tag: str = ""


@dataclass(frozen=True, slots=True)
class GenerationResponse:
    text: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0


@dataclass(frozen=True, slots=True)
class BackendSpec:
    """Declarative backend description; safe to serialize in run manifests."""

    kind: str
    endpoint: str = ""
    model: str = "local"
    auth_env: str | None = None
    timeout_s: float = 60.0
    max_retries: int = 2
    backoff_s: float = 0.25
    cache_path: str = ""
    mock_script: tuple[tuple[str, str], ...] = ()
    mock_response: str = "MOVE: NO_INTERVENTION"

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ConfigError("http backend needs an endpoint")
        if self.kind == "replay" and not self.cache_path:
            raise ConfigError("replay backend needs a cache_path")

    def redacted(self) -> dict:
        """Manifest-safe view: names the token variable, never its value."""
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "model": self.model,
            "auth_env": self.auth_env,
            "cache_path": self.cache_path,
        }


def _canonical_request(model: str, request: GenerationRequest) -> dict:
    return {
        "model": model,
        "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        "sampling": {
            "temperature": request.sampling.temperature,
            "top_p": request.sampling.top_p,
            "top_k": request.sampling.top_k,
            "max_tokens": request.sampling.max_tokens,
        },
    }


def request_hash(model: str, request: GenerationRequest) -> str:
    """Cache key: content and sampling and model; the tag is excluded so
    relabeling a run never invalidates its cache."""
    import hashlib

    payload = json.dumps(
        _canonical_request(model, request), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class HttpBackend:
    def __init__(self, spec: BackendSpec) -> None:
        self.spec = spec

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.spec.auth_env:
            token = os.environ.get(self.spec.auth_env)
            if not token:
                raise AuthMissing(
                    f"environment variable {self.spec.auth_env} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        payload = {
            "model": self.spec.model,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages
            ],
            "temperature": request.sampling.temperature,
            "top_p": request.sampling.top_p,
            "max_tokens": request.sampling.max_tokens,
        }
        if request.sampling.top_k is not None:
            payload["top_k"] = request.sampling.top_k

        last_error: BackendError = BackendTimeout("no attempt made")
        for attempt in range(self.spec.max_retries + 1):
            if attempt:
                time.sleep(self.spec.backoff_s * (2 ** (attempt - 1)))
            started = time.perf_counter()
            try:
                resp = requests.post(
                    self.spec.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.spec.timeout_s,
                )
            except requests.Timeout:
                last_error = BackendTimeout(f"timeout after {self.spec.timeout_s}s")
                continue
            except requests.RequestException as exc:
                last_error = BackendError(f"connection failed: {exc}")
                continue
            if resp.status_code >= 500:
                last_error = HttpStatusError(resp.status_code)
                continue
            if resp.status_code != 200:
                raise HttpStatusError(resp.status_code, resp.text[:200])
            latency_ms = (time.perf_counter() - started) * 1000.0
            return _parse_chat_completion(resp, latency_ms)
        raise last_error


def _parse_chat_completion(resp: requests.Response, latency_ms: float) -> GenerationResponse:
    try:
        body = resp.json()
        choice = body["choices"][0]
        text = choice["message"]["content"]
        if not isinstance(text, str):
            raise TypeError("content is not a string")
    except Exception as exc:
        raise MalformedResponse(f"bad chat-completions body: {exc}") from exc
    usage = body.get("usage") or {}
    return GenerationResponse(
        text=text,
        finish_reason=str(choice.get("finish_reason", "stop")),
        prompt_tokens=int(usage.get("prompt_tokens", 0)),
        completion_tokens=int(usage.get("completion_tokens", 0)),
        latency_ms=latency_ms,
    )


_TASK_RE = re.compile(r"^TASK:\s*(\w+)")
_INPUT_RE = re.compile(r"INPUT:\s*(\{.*\})\s*$", re.DOTALL)


class TemplateBackend:
    """Rule-based generator. Output depends only on the request content."""

    def __init__(self, spec: BackendSpec) -> None:
        self.spec = spec

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        task = None
        for message in request.messages:
            if message.role == "system":
                match = _TASK_RE.match(message.content)
                if match:
                    task = match.group(1)
                break
        user_text = "\n\n".join(
            m.content for m in request.messages if m.role == "user"
        )
        if task is None:
            text = "MOVE: " + banks.predict_move_label(user_text)
        else:
            text = self._run_task(task, user_text)
        return GenerationResponse(
            text=text, completion_tokens=len(text.split()), latency_ms=0.0
        )

    def _run_task(self, task: str, user_text: str) -> str:
        match = _INPUT_RE.search(user_text)
        if not match:
            return "ERROR: no INPUT block"
        try:
            payload = json.loads(match.group(1))
        except json.JSONDecodeError:
            return "ERROR: bad INPUT block"
        if task == "problem_analysis":
            return banks.render_analysis(
                payload.get("statement", ""), payload.get("reference_answer", "")
            )
        if task == "student_utterance":
            from .taxonomy import Calibration

            rng = seeded_rng(int(payload.get("seed", 0)), "student", payload.get("beat", ""))
            return banks.student_line(
                Calibration(payload.get("calibration", "well_calibrated")),
                payload.get("beat", "work"),
                rng,
                payload.get("statement", ""),
                payload.get("reference_answer", ""),
                payload.get("hint_kind", "scaffolding"),
            )
        if task == "coach_utterance":
            rng = seeded_rng(int(payload.get("seed", 0)), "coach", payload.get("move", ""))
            move = CoachMove[payload.get("move", "CONTINUE_PROMPT")]
            return banks.coach_line(move, rng)
        return f"ERROR: unknown task {task}"


class MockBackend:
    def __init__(self, spec: BackendSpec) -> None:
        self.spec = spec
        self._script = dict(spec.mock_script)

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        key = request_hash(self.spec.model, request)
        text = self._script.get(key, self.spec.mock_response)
        return GenerationResponse(
            text=text, completion_tokens=len(text.split()), latency_ms=0.0
        )


class ReplayBackend:
    def __init__(self, spec: BackendSpec) -> None:
        path = Path(spec.cache_path)
        if not path.exists():
            raise ConfigError(f"replay cache not found: {path}")
        self.spec = spec
        self._cache: dict[str, dict] = {}
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                row = json.loads(line)
                self._cache[row["key"]] = row["response"]

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        key = request_hash(self.spec.model, request)
        row = self._cache.get(key)
        if row is None:
            raise CacheMiss(f"no cached response for key {key[:12]}...")
        return GenerationResponse(
            text=row["text"],
            finish_reason=row.get("finish_reason", "stop"),
            prompt_tokens=int(row.get("prompt_tokens", 0)),
            completion_tokens=int(row.get("completion_tokens", 0)),
            latency_ms=float(row.get("latency_ms", 0.0)),
        )


class RecordingBackend:
    """Wraps a live backend and appends each new (key, response) to a JSONL
    cache. Append-only; keys already present are never rewritten, so a rerun
    over the same inputs leaves the file byte-identical."""

    def __init__(self, inner, model: str, cache_path: str) -> None:
        self.inner = inner
        self.model = model
        self.path = Path(cache_path)
        self._lock = threading.Lock()
        self._seen: set[str] = set()
        if self.path.exists():
            with open(self.path, encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        self._seen.add(json.loads(line)["key"])
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        response = self.inner.complete(request)
        key = request_hash(self.model, request)
        row = {
            "key": key,
            "request": {**_canonical_request(self.model, request), "tag": request.tag},
            "response": {
                "text": response.text,
                "finish_reason": response.finish_reason,
                "prompt_tokens": response.prompt_tokens,
                "completion_tokens": response.completion_tokens,
                "latency_ms": response.latency_ms,
            },
        }
        with self._lock:
            if key not in self._seen:
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps(row, ensure_ascii=False) + "\n")
                self._seen.add(key)
        return response


def build_backend(spec: BackendSpec):
    """Instantiate the backend for a spec, wrapping it in a recorder when a
    cache path is configured on a non-replay kind."""
    if spec.kind == "http":
        backend = HttpBackend(spec)
    elif spec.kind == "template":
        backend = TemplateBackend(spec)
    elif spec.kind == "mock":
        backend = MockBackend(spec)
    else:
        return ReplayBackend(spec)
    if spec.cache_path:
        return RecordingBackend(backend, spec.model, spec.cache_path)
    return backend


def complete(spec: BackendSpec, request: GenerationRequest) -> GenerationResponse:
    """One-shot convenience; long loops should reuse ``build_backend``."""
    return build_backend(spec).complete(request)


def record_replay(spec: BackendSpec, cache_path: str | Path) -> BackendSpec:
    """Copy of ``spec`` that records every completion into ``cache_path``."""
    return dataclasses.replace(spec, cache_path=str(cache_path))
