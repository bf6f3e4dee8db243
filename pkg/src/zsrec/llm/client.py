"""Chat-completion access: live HTTP endpoint, offline stubs, and a response cache.

A *backend* is any callable taking a :class:`ChatRequest` and returning the
raw reply text. :class:`ChatClient` puts the cache in front of a backend.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import httpx
import numpy as np

from ..dataset import stable_hash
from ..errors import ConfigError, EndpointError, TokenBudgetExceeded

log = logging.getLogger(__name__)

TRANSIENT_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class ClientConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    token_budget: int = 4096
    response_reserve: int = 1000
    max_retries: int = 5
    backoff_base: float = 1.0
    backoff_max: float = 60.0
    requests_per_minute: float = 60.0  # 0 disables client-side pacing
    concurrency: int = 4
    timeout: float = 120.0
    cache_dir: Optional[str] = None
    api_key_env: str = "OPENAI_API_KEY"

    def __post_init__(self):
        if self.token_budget - self.response_reserve <= 0:
            raise ConfigError("token_budget must exceed response_reserve")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_retries < 0 or self.concurrency < 1:
            raise ConfigError("max_retries must be >= 0 and concurrency >= 1")


@dataclass(frozen=True)
class ChatRequest:
    """One prompt; ``user`` and ``candidates`` are context for stub backends only."""

    prompt: str
    user: str = ""
    candidates: Sequence[str] = ()


def cache_key(model: str, temperature: float, prompt: str) -> str:
    return hashlib.sha256(f"{model}\0{temperature!r}\0{prompt}".encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per exchange. Readers never lock; writers are serialized and atomic."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        try:
            return json.loads(self.path(key).read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None

    def put(self, key: str, record: dict) -> None:
        blob = json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        with self._lock:
            final = self.path(key)
            tmp = final.with_name(final.name + f".{threading.get_ident()}.tmp")
            tmp.write_text(blob, encoding="utf-8")
            os.replace(tmp, final)


class RateLimiter:
    """Spaces request starts at least ``60 / rpm`` seconds apart across threads."""

    def __init__(self, requests_per_minute: float, clock=time.monotonic, sleep=time.sleep):
        self.interval = 60.0 / requests_per_minute if requests_per_minute > 0 else 0.0
        self._clock, self._sleep = clock, sleep
        self._next = 0.0
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            wait = self._next - now
            self._next = max(now, self._next) + self.interval
        if wait > 0:
            self._sleep(wait)


def _is_context_overflow(response: httpx.Response) -> bool:
    if response.status_code not in (400, 413):
        return False
    text = response.text.lower()
    return "context_length_exceeded" in text or "maximum context length" in text


class LiveBackend:
    """OpenAI-compatible ``/chat/completions`` over HTTPS with retries and rate limiting."""

    def __init__(self, config: ClientConfig, transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep, api_key: Optional[str] = None):
        self.config = config
        key = api_key if api_key is not None else os.environ.get(config.api_key_env)
        if not key:
            raise ConfigError(f"no API key: set the {config.api_key_env} environment variable")
        self._http = httpx.Client(transport=transport, timeout=config.timeout,
                                  headers={"Authorization": f"Bearer {key}"})
        self._sleep = sleep
        self._limiter = RateLimiter(config.requests_per_minute, sleep=sleep)
        self.requests_made = 0

    def _delay(self, attempt: int, response: Optional[httpx.Response]) -> float:
        if response is not None:
            retry_after = response.headers.get("retry-after")
            if retry_after:
                try:
                    return min(float(retry_after), self.config.backoff_max)
                except ValueError:
                    pass
        return min(self.config.backoff_base * 2 ** attempt, self.config.backoff_max)

    def __call__(self, request: ChatRequest) -> str:
        cfg = self.config
        body = {"model": cfg.model, "temperature": cfg.temperature,
                "messages": [{"role": "user", "content": request.prompt}]}
        last: Optional[EndpointError] = None
        for attempt in range(cfg.max_retries + 1):
            self._limiter.acquire()
            self.requests_made += 1
            response = None
            try:
                response = self._http.post(cfg.endpoint, json=body)
            except httpx.TransportError as exc:
                last = EndpointError(f"transport error: {exc}", retryable=True)
            else:
                if response.status_code == 200:
                    try:
                        return response.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise EndpointError(f"malformed completion body: {exc}", status=200) from None
                if _is_context_overflow(response):
                    raise TokenBudgetExceeded(
                        f"endpoint rejected the prompt as over the context window ({response.status_code})",
                        status=response.status_code)
                if response.status_code not in TRANSIENT_STATUS:
                    raise EndpointError(f"HTTP {response.status_code}: {response.text[:200]}",
                                        status=response.status_code)
                last = EndpointError(f"HTTP {response.status_code}", status=response.status_code,
                                     retryable=True)
            if attempt < cfg.max_retries:
                delay = self._delay(attempt, response)
                log.warning("transient endpoint failure (%s); retrying in %.1fs", last, delay)
                self._sleep(delay)
        raise EndpointError(f"giving up after {cfg.max_retries + 1} attempts: {last}",
                            status=last.status if last else None, retryable=False)


class ChatClient:
    """Serves replies from the cache when present, otherwise asks the backend and stores the reply."""

    def __init__(self, backend: Callable[[ChatRequest], str], model: str,
                 temperature: float = 0.0, cache: Optional[ResponseCache] = None):
        self.backend = backend
        self.model = model
        self.temperature = temperature
        self.cache = cache
        self.backend_calls = 0
        self._count_lock = threading.Lock()

    @classmethod
    def from_config(cls, config: ClientConfig, backend=None) -> "ChatClient":
        cache = ResponseCache(config.cache_dir) if config.cache_dir else None
        return cls(backend or LiveBackend(config), config.model, config.temperature, cache)

    def key(self, prompt: str) -> str:
        return cache_key(self.model, self.temperature, prompt)

    def complete(self, request: ChatRequest) -> str:
        key = self.key(request.prompt)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None and "response" in hit:
                return hit["response"]
        with self._count_lock:
            self.backend_calls += 1
        text = self.backend(request)
        if self.cache is not None:
            self.cache.put(key, {"model": self.model, "temperature": self.temperature,
                                 "prompt": request.prompt, "response": text})
        return text


def complete_chat(config: ClientConfig, prompt: str, backend=None) -> str:
    return ChatClient.from_config(config, backend).complete(ChatRequest(prompt))


# --- offline stubs ----------------------------------------------------------

def numbered(titles: Sequence[str]) -> str:
    return "\n".join(f"{r}. {t}" for r, t in enumerate(titles, start=1))


@dataclass
class EchoStub:
    """Replies with a fixed per-user title list (e.g. a baseline's recommendations)."""

    lists: dict[str, list[str]]
    name: str = "echo"

    def __call__(self, request: ChatRequest) -> str:
        return numbered(self.lists.get(request.user, []))


@dataclass
class CandidateStub:
    """Re-rank stub: returns the supplied candidates, optionally reversed."""

    reverse: bool = False
    name: str = "echo-candidates"

    def __call__(self, request: ChatRequest) -> str:
        titles = list(request.candidates)
        return numbered(titles[::-1] if self.reverse else titles)


@dataclass
class GibberishStub:
    """Deterministic nonsense titles that match no real catalog."""

    n: int = 50
    name: str = "gibberish"
    _letters: str = field(default="bcdfghjklmnpqrstvwxz", repr=False)

    def __call__(self, request: ChatRequest) -> str:
        rng = np.random.default_rng([stable_hash(request.user), stable_hash(request.prompt)])
        titles = []
        for _ in range(self.n):
            words = ["".join(rng.choice(list(self._letters), size=rng.integers(5, 9)))
                     for _ in range(3)]
            titles.append(" ".join(w.capitalize() for w in words) + f" {int(rng.integers(1000, 9999))}")
        return numbered(titles)


STUB_NAMES = ("echo-mostpop", "echo-candidates", "reverse-candidates", "gibberish")
