"""Chat-completion providers: HTTP client, response cache, scripted mock.

The HTTP client speaks the OpenAI-compatible ``/chat/completions`` shape
with a single user message. Responses are cached on disk keyed by
(prompt, model, temperature, attempt_index), so replaying an experiment
with a warm cache issues no network requests and returns byte-identical
text. ``attempt_index`` is part of the key on purpose: retries must be
able to produce a different response, which a plain prompt-keyed cache
would prevent.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional

import requests

DEFAULT_API_KEY_ENV = "LLM_API_KEY"

# transport retries are about flaky networks, not response content;
# content retries are budgeted by complete_until_valid
TRANSPORT_RETRIES = 3
BACKOFF_SECONDS = 1.0
RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class LlmError(Exception):
    pass


class NetworkError(LlmError):
    pass


class AuthError(LlmError):
    pass


class EmptyResponse(LlmError):
    pass


class ScriptExhausted(LlmError):
    pass


class ExhaustedAttempts(LlmError):
    """All validity attempts consumed without an acceptable response."""

    def __init__(self, attempts: int, reasons: Optional[list] = None):
        self.attempts = attempts
        self.reasons = list(reasons or [])
        detail = f"; last failure: {self.reasons[-1]}" if self.reasons else ""
        super().__init__(f"no valid response after {attempts} attempts{detail}")


@dataclass(frozen=True)
class ProviderConfig:
    endpoint_url: str
    model_name: str
    api_key_env: str = DEFAULT_API_KEY_ENV
    temperature: float = 0.0
    max_output_tokens: int = 1024
    request_timeout: float = 60.0

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")


@dataclass(frozen=True)
class CompletionRecord:
    prompt_hash: str
    model_name: str
    temperature: float
    attempt_index: int
    response_text: str
    timestamp: str


def completion_key(prompt: str, model_name: str, temperature: float, attempt_index: int) -> str:
    payload = json.dumps(
        {
            "prompt": prompt,
            "model": model_name,
            "temperature": float(temperature),
            "attempt_index": int(attempt_index),
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed store of completion records, one JSON file per key."""

    def __init__(self, root):
        self.root = Path(root)
        self._lock = threading.Lock()

    def path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[CompletionRecord]:
        path = self.path(key)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as handle:
            return CompletionRecord(**json.load(handle))

    def put(self, record: CompletionRecord) -> None:
        path = self.path(record.prompt_hash)
        with self._lock:
            if path.exists():  # records are immutable once written
                return
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as handle:
                json.dump(asdict(record), handle, ensure_ascii=False, indent=2)
            os.replace(tmp, path)


class CompletionProvider:
    """Interface shared by the HTTP client and the scripted mock."""

    model_name: str

    def complete(self, prompt: str, attempt_index: int = 0) -> str:
        raise NotImplementedError

    def complete_until_valid(
        self,
        prompt: str,
        is_valid: Callable[[str], bool],
        max_extra_attempts: int = 5,
        attempt_offset: int = 0,
    ) -> str:
        """First response satisfying ``is_valid``, at most 1 + max_extra_attempts calls.

        ``attempt_offset`` shifts the attempt indices so that independent
        samples of the same prompt (forest members, repeats) occupy disjoint
        cache slots instead of replaying each other's responses.
        """
        if max_extra_attempts < 0:
            raise ValueError("max_extra_attempts must be >= 0")
        reasons = []
        for attempt in range(1 + max_extra_attempts):
            text = self.complete(prompt, attempt_index=attempt_offset + attempt)
            if is_valid(text):
                return text
            reasons.append(f"attempt {attempt}: response rejected")
        raise ExhaustedAttempts(1 + max_extra_attempts, reasons)


def _post(url: str, headers: dict, body: dict, timeout: float):
    response = requests.post(url, headers=headers, json=body, timeout=timeout)
    return response.status_code, response.json() if response.content else {}


class ChatClient(CompletionProvider):
    """HTTP chat-completion client with disk cache and transport retries.

    ``transport`` and ``sleeper`` are injectable for tests; the default
    transport POSTs via requests and the default sleeper is time.sleep.
    """

    def __init__(
        self,
        config: ProviderConfig,
        cache_dir=None,
        offline: bool = False,
        transport=None,
        sleeper: Callable[[float], None] = time.sleep,
        max_inflight: int = 4,
    ):
        self.config = config
        self.cache = ResponseCache(cache_dir) if cache_dir is not None else None
        self.offline = offline
        self.transport = transport or _post
        self.sleeper = sleeper
        self._inflight = threading.Semaphore(max_inflight)

    @property
    def model_name(self) -> str:
        return self.config.model_name

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _request(self, prompt: str) -> str:
        url = self.config.endpoint_url.rstrip("/") + "/chat/completions"
        body = {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": self.config.max_output_tokens,
        }
        last_failure = "no request issued"
        for attempt in range(1 + TRANSPORT_RETRIES):
            if attempt:
                self.sleeper(BACKOFF_SECONDS * 2 ** (attempt - 1))
            try:
                with self._inflight:
                    status, payload = self.transport(
                        url, self._headers(), body, self.config.request_timeout
                    )
            except requests.RequestException as exc:
                last_failure = f"transport error: {exc}"
                continue
            if status in (401, 403):
                raise AuthError(f"provider rejected credentials (HTTP {status})")
            if status in RETRYABLE_STATUSES:
                last_failure = f"HTTP {status}"
                continue
            if status != 200:
                raise NetworkError(f"unexpected HTTP {status} from {url}")
            try:
                text = payload["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                raise EmptyResponse(f"malformed completion payload from {url}")
            if not isinstance(text, str) or not text.strip():
                raise EmptyResponse("provider returned an empty message")
            return text
        raise NetworkError(f"giving up on {url} after {1 + TRANSPORT_RETRIES} tries: {last_failure}")

    def complete(self, prompt: str, attempt_index: int = 0) -> str:
        key = completion_key(
            prompt, self.config.model_name, self.config.temperature, attempt_index
        )
        if self.cache is not None:
            record = self.cache.get(key)
            if record is not None:
                return record.response_text
        if self.offline:
            raise NetworkError(f"offline mode and no cached response for key {key[:12]}")
        text = self._request(prompt)
        if self.cache is not None:
            self.cache.put(
                CompletionRecord(
                    prompt_hash=key,
                    model_name=self.config.model_name,
                    temperature=self.config.temperature,
                    attempt_index=attempt_index,
                    response_text=text,
                    timestamp=datetime.now(timezone.utc).isoformat(),
                )
            )
        return text


class MockProvider(CompletionProvider):
    """Scripted provider for tests: returns canned responses in order.

    Script items may be strings (returned) or exceptions (raised).
    Records every call as (prompt, attempt_index) for assertions.
    """

    def __init__(self, script: Iterable, model_name: str = "mock"):
        self.script = list(script)
        self.model_name = model_name
        self.calls: list[tuple[str, int]] = []

    def complete(self, prompt: str, attempt_index: int = 0) -> str:
        self.calls.append((prompt, attempt_index))
        if not self.script:
            raise ScriptExhausted(f"mock script exhausted after {len(self.calls) - 1} calls")
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item
