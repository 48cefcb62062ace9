"""Chat-completion client with bounded concurrency, retries and an audit log.

Two backends are provided: :class:`HttpBackend` speaks the common JSON
chat-completion wire shape (``model``, ``messages``, ``temperature``,
``max_tokens``), and :class:`MockBackend` is a seeded, deterministic stand-in
used for tests and offline campaigns.  A ``mock://`` base URL selects the
mock, e.g. ``mock://noisy?seed=7&malformed_rate=0.05``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence
from urllib.parse import parse_qs, urlparse

import requests

logger = logging.getLogger(__name__)

ENV_API_KEY = "CODESURGEON_API_KEY"
ENV_BASE_URL = "CODESURGEON_BASE_URL"


class GatewayError(Exception):
    """Base class for gateway failures."""


class GatewayTimeout(GatewayError):
    """The endpoint did not answer successfully within the retry budget."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class MalformedPayload(GatewayError):
    """The endpoint answered, but not with a chat-completion payload."""


class AuthenticationFailed(GatewayError):
    """The endpoint rejected the credentials (HTTP 401/403)."""


class Cancelled(GatewayError):
    """The batch was cancelled before this request was sent."""


class _Retryable(Exception):
    pass


@dataclass(frozen=True)
class ChatRequest:
    model: str
    system_text: str
    user_text: str
    temperature: float = 0.7
    max_tokens: int = 2048
    schema: dict | None = None
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    model: str
    latency_ms: int
    attempt: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.attempt < 1:
            raise ValueError("attempt must be >= 1")
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be nonnegative")


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "mock://well-formed"
    api_key: str | None = None
    max_in_flight: int = 8
    retry_max: int = 3
    timeout_ms: int = 120_000
    backoff_base_ms: int = 500
    constrained_decoding: bool = True

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.retry_max < 0:
            raise ValueError("retry_max must be >= 0")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")

    @classmethod
    def from_env(cls, **overrides) -> "EndpointConfig":
        kw: dict[str, Any] = {}
        if os.environ.get(ENV_BASE_URL):
            kw["base_url"] = os.environ[ENV_BASE_URL]
        if os.environ.get(ENV_API_KEY):
            kw["api_key"] = os.environ[ENV_API_KEY]
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def __repr__(self):
        key = "***" if self.api_key else None
        return (
            f"EndpointConfig(base_url={self.base_url!r}, api_key={key}, "
            f"max_in_flight={self.max_in_flight}, retry_max={self.retry_max}, "
            f"timeout_ms={self.timeout_ms})"
        )


def schema_instruction(schema: dict) -> str:
    return (
        "\n\nRespond with a single JSON object and nothing else. "
        "It must validate against this JSON schema:\n" + json.dumps(schema, indent=2, sort_keys=True)
    )


class Backend(Protocol):
    supports_constrained_decoding: bool

    def send(self, req: ChatRequest, cfg: EndpointConfig) -> tuple[str, dict]:
        """Return (completion text, metadata). Raise ``_Retryable`` for transient faults."""
        ...


class HttpBackend:
    """JSON-over-HTTP chat-completion backend."""

    def __init__(self, session: requests.Session | None = None, constrained: bool = True):
        self.session = session or requests.Session()
        self.supports_constrained_decoding = constrained

    def payload(self, req: ChatRequest, constrained: bool) -> dict:
        system_text = req.system_text
        if req.schema is not None and not constrained:
            system_text += schema_instruction(req.schema)
        body: dict[str, Any] = {
            "model": req.model,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": req.user_text},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        if req.schema is not None and constrained:
            body["response_format"] = {
                "type": "json_schema",
                "json_schema": {"name": "scores", "schema": req.schema, "strict": True},
            }
        return body

    def send(self, req: ChatRequest, cfg: EndpointConfig) -> tuple[str, dict]:
        constrained = cfg.constrained_decoding and self.supports_constrained_decoding
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        try:
            resp = self.session.post(
                url, json=self.payload(req, constrained), headers=headers,
                timeout=cfg.timeout_ms / 1000,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise _Retryable(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthenticationFailed(f"HTTP {resp.status_code} from {url}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise _Retryable(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise MalformedPayload(f"HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedPayload(f"unexpected payload from {url}: {resp.text[:200]!r}") from exc
        if not isinstance(text, str):
            raise MalformedPayload("completion content is not a string")
        meta = {"schema_mode": "constrained" if constrained else "prompt"} if req.schema else {}
        return text, meta


# ---------------------------------------------------------------------------
# Mock backend


_CRITERIA = ("correctness", "code_quality", "security", "performance", "completeness")

_LANG_COMMENT = {
    "Python": "#", "Ruby": "#", "PHP": "//", "Pascal": "//", "Go": "//", "Rust": "//",
    "Swift": "//", "Kotlin": "//", "C#": "//", "JavaScript": "//", "Java": "//", "C++": "//",
}


def _seeded(seed: int, req: ChatRequest, salt: str = "") -> random.Random:
    h = hashlib.sha256(f"{seed}:{salt}:{req.digest()}".encode()).digest()
    return random.Random(int.from_bytes(h[:16], "big"))


class MockBackend:
    """Deterministic backend: the reply is a pure function of (seed, request).

    Requests carrying a ``schema`` are answered as evaluator calls with a JSON
    object of five criterion scores; all other requests are answered as
    generation calls with a tagged (description, buggy, fixed) sample.

    personality:
        ``"well-formed"`` always emits a correctly tagged sample;
        ``"noisy"`` corrupts a fraction ``malformed_rate`` of generations.
    """

    supports_constrained_decoding = True

    def __init__(
        self,
        seed: int = 0,
        personality: str = "well-formed",
        malformed_rate: float = 0.05,
        fixed_scores: dict[str, float] | None = None,
        latency_s: float = 0.0,
    ):
        if personality not in ("well-formed", "noisy"):
            raise ValueError(f"unknown mock personality {personality!r}")
        if not 0.0 <= malformed_rate <= 1.0:
            raise ValueError("malformed_rate must be in [0, 1]")
        self.seed = seed
        self.personality = personality
        self.malformed_rate = malformed_rate
        self.fixed_scores = fixed_scores
        self.latency_s = latency_s
        self._lock = threading.Lock()
        self.in_flight = 0
        self.peak_in_flight = 0
        self.calls = 0

    @classmethod
    def from_url(cls, url: str) -> "MockBackend":
        parsed = urlparse(url)
        q = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
        return cls(
            seed=int(q.get("seed", 0)),
            personality=parsed.netloc or "well-formed",
            malformed_rate=float(q.get("malformed_rate", 0.05)),
            latency_s=float(q.get("latency_ms", 0)) / 1000,
        )

    def would_malform(self, req: ChatRequest) -> bool:
        if self.personality != "noisy" or req.schema is not None:
            return False
        return _seeded(self.seed, req, "malform").random() < self.malformed_rate

    def send(self, req: ChatRequest, cfg: EndpointConfig) -> tuple[str, dict]:
        with self._lock:
            self.in_flight += 1
            self.calls += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
        try:
            if self.latency_s:
                time.sleep(self.latency_s)
            if req.schema is not None:
                return self._scores(req), {"schema_mode": "constrained"}
            return self._sample(req), {}
        finally:
            with self._lock:
                self.in_flight -= 1

    def _scores(self, req: ChatRequest) -> str:
        if self.fixed_scores is not None:
            return json.dumps({k: self.fixed_scores[k] for k in _CRITERIA})
        rng = _seeded(self.seed, req, "scores")
        # evaluator leniency differs per model, as with real judges
        bias = (int(hashlib.sha256(req.model.encode()).hexdigest(), 16) % 9 - 4) * 0.1
        quality = 9.2 + bias if rng.random() > 0.12 else rng.uniform(3.0, 8.0)
        out = {}
        for name in _CRITERIA:
            v = quality + rng.gauss(0.0, 0.45)
            out[name] = round(min(10.0, max(0.0, v)), 1)
        return json.dumps(out)

    def _sample(self, req: ChatRequest) -> str:
        rng = _seeded(self.seed, req, "sample")
        tag = req.digest()[:12]
        lang = next((l for l in _LANG_COMMENT if f"Language: {l}\n" in req.user_text), "Python")
        c = _LANG_COMMENT[lang]
        n = rng.randint(6, 18)
        lines = [f"{c} sample {tag}"]
        for i in range(1, n):
            lines.append(f"value_{i} = combine(value_{i - 1}, {rng.randint(0, 999)})")
        buggy = list(lines)
        fixed = list(lines)
        k = rng.randint(1, n - 1)
        buggy[k] = f"value_{k} = combine(value_{k - 1}, limit - 1)"
        fixed[k] = f"value_{k} = combine(value_{k - 1}, limit)"
        if rng.random() < 0.3:
            fixed.insert(k, f"{c} guard added for {tag}")
        description = (
            f"The computation of value_{k} uses an incorrect bound ({tag}); "
            "the fix restores the intended limit."
        )
        parts = {
            "error_description": description,
            "buggy_code": "\n".join(buggy),
            "fixed_code": "\n".join(fixed),
        }
        if self.would_malform(req):
            kind = rng.choice(("drop-close", "drop-tag", "empty"))
            if kind == "drop-close":
                return self._render(parts).replace("</fixed_code>", "")
            if kind == "drop-tag":
                parts.pop("error_description")
            else:
                parts["fixed_code"] = "   "
        return self._render(parts)

    @staticmethod
    def _render(parts: dict[str, str]) -> str:
        chunks = ["Here is the requested example.\n"]
        for name, body in parts.items():
            chunks.append(f"<{name}>\n{body}\n</{name}>\n")
        return "\n".join(chunks)


def backend_for(cfg: EndpointConfig) -> Backend:
    if cfg.base_url.startswith("mock://"):
        return MockBackend.from_url(cfg.base_url)
    return HttpBackend()


class AuditLog:
    """Append-only JSONL log of every request/response pair."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, req: ChatRequest, outcome: ChatResponse | Exception, started: float):
        rec = {
            "request_digest": req.digest(),
            "request": req.to_dict(),
            "started_at": datetime.fromtimestamp(started, timezone.utc).isoformat(),
            "finished_at": datetime.now(timezone.utc).isoformat(),
        }
        if isinstance(outcome, ChatResponse):
            rec["response"] = asdict(outcome)
        else:
            rec["error"] = {"type": type(outcome).__name__, "message": str(outcome)}
        line = json.dumps(rec, ensure_ascii=False) + "\n"
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)


class Gateway:
    """Uniform completion client over a backend.

    ``sleep`` is injectable so tests can observe backoff without waiting.
    """

    def __init__(
        self,
        cfg: EndpointConfig,
        backend: Backend | None = None,
        audit_log: str | Path | AuditLog | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self.backend = backend if backend is not None else backend_for(cfg)
        if audit_log is not None and not isinstance(audit_log, AuditLog):
            audit_log = AuditLog(audit_log)
        self.audit = audit_log
        self._sleep = sleep
        self._jitter = random.Random()

    def _backoff(self, attempt: int) -> float:
        base = self.cfg.backoff_base_ms / 1000 * (2 ** (attempt - 1))
        return base * (0.5 + self._jitter.random())

    def complete(self, req: ChatRequest) -> ChatResponse:
        started = time.time()
        attempts = self.cfg.retry_max + 1
        last: Exception | None = None
        try:
            for attempt in range(1, attempts + 1):
                t0 = time.perf_counter()
                try:
                    text, meta = self.backend.send(req, self.cfg)
                except _Retryable as exc:
                    last = exc
                    logger.debug("attempt %d/%d for %s failed: %s", attempt, attempts, req.model, exc)
                    if attempt < attempts:
                        self._sleep(self._backoff(attempt))
                    continue
                latency = int(round((time.perf_counter() - t0) * 1000))
                resp = ChatResponse(text=text, model=req.model, latency_ms=latency,
                                    attempt=attempt, metadata=meta)
                if self.audit:
                    self.audit.append(req, resp, started)
                return resp
            raise GatewayTimeout(f"no successful completion after {attempts} attempts: {last}", attempts)
        except GatewayError as exc:
            if self.audit:
                self.audit.append(req, exc, started)
            raise

    def complete_batch(
        self, reqs: Sequence[ChatRequest], cancel: threading.Event | None = None
    ) -> list[tuple[int, ChatResponse | GatewayError]]:
        """Complete every request with at most ``max_in_flight`` outstanding.

        Results come back in input order; one failure never aborts the batch.
        Setting ``cancel`` makes not-yet-started requests resolve to
        :class:`Cancelled`.
        """

        def one(i: int) -> tuple[int, ChatResponse | GatewayError]:
            if cancel is not None and cancel.is_set():
                return i, Cancelled("batch cancelled")
            try:
                return i, self.complete(reqs[i])
            except GatewayError as exc:
                return i, exc
            except Exception as exc:  # backend bug; keep the batch alive
                logger.exception("request %d failed", i)
                return i, MalformedPayload(f"{type(exc).__name__}: {exc}")

        if not reqs:
            return []
        with ThreadPoolExecutor(max_workers=self.cfg.max_in_flight) as pool:
            return list(pool.map(one, range(len(reqs))))
