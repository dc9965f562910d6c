"""Provider-agnostic chat gateway.

Every model-dependent stage (extraction, classification, sketching,
generation, judging, calibration, evaluation) issues requests through one
``Gateway`` so the whole pipeline can run deterministically against a
scripted mock. Real providers are reached through small backend adapters
speaking the chat-completions wire format.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field, replace

import requests

from .errors import (
    ConfigError,
    GatewayTimeout,
    ProviderError,
    TransientBackendError,
)

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    total_tokens: int = 0
    reasoning_tokens: int | None = None


def normalize_usage(visible_output_tokens: int, reasoning_tokens: int | None,
                    prompt_tokens: int) -> TokenUsage:
    """Fold reasoning tokens into the completion count and recompute the total.

    completion = visible + reasoning; total = prompt + completion. The total
    is always recomputed, never trusted from the provider.
    """
    if visible_output_tokens < 0 or prompt_tokens < 0:
        raise ValueError("token counts must be nonnegative")
    if reasoning_tokens is not None and reasoning_tokens < 0:
        raise ValueError("token counts must be nonnegative")
    completion = visible_output_tokens + (reasoning_tokens or 0)
    return TokenUsage(
        prompt_tokens=prompt_tokens,
        completion_tokens=completion,
        total_tokens=prompt_tokens + completion,
        reasoning_tokens=reasoning_tokens,
    )


@dataclass
class ChatRequest:
    system_prompt: str
    user_prompt: str
    model_id: str = "default"
    reasoning_effort: str | None = None  # none / low / medium / high
    max_output_tokens: int = 8192
    sample_count: int = 1
    per_request_timeout: float = 300.0
    temperature: float | None = None
    top_p: float | None = None

    def validate(self) -> None:
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("system_prompt and user_prompt must be non-empty")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.temperature is not None and not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature out of range [0, 2]")
        if self.top_p is not None and not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p out of range (0, 1]")


@dataclass
class ChatResponse:
    text: str = ""
    thinking: str | None = None
    usage: TokenUsage = field(default_factory=TokenUsage)
    latency: float = 0.0
    provider_error: str | None = None

    @property
    def failed(self) -> bool:
        return self.provider_error is not None


class Gateway:
    """Retrying front end over a single backend adapter.

    Transient transport failures are retried with exponential backoff;
    well-formed provider refusals and non-retriable statuses are recorded
    in ``provider_error`` and never retried. The returned list always has
    exactly ``sample_count`` entries.
    """

    def __init__(self, backend, retry_attempts: int = 3,
                 retry_base_delay: float = 1.0, sleep=time.sleep):
        self.backend = backend
        self.retry_attempts = retry_attempts
        self.retry_base_delay = retry_base_delay
        self._sleep = sleep
        self._lock = threading.Lock()
        self.call_count = 0
        self.retry_count = 0

    def complete(self, request: ChatRequest) -> list[ChatResponse]:
        if self.backend is None:
            raise ConfigError("gateway has no backend configured")
        request.validate()
        with self._lock:
            self.call_count += 1
        return [self._one_sample(request) for _ in range(request.sample_count)]

    def complete_text(self, request: ChatRequest) -> ChatResponse:
        """Single-sample convenience used by pipeline stages."""
        return self.complete(replace(request, sample_count=1))[0]

    def _one_sample(self, request: ChatRequest) -> ChatResponse:
        started = time.monotonic()
        last_error = None
        for attempt in range(self.retry_attempts):
            try:
                response = self.backend.send(request)
                response.latency = time.monotonic() - started
                return response
            except TransientBackendError as exc:
                last_error = exc
                if attempt + 1 < self.retry_attempts:
                    with self._lock:
                        self.retry_count += 1
                    self._sleep(self.retry_base_delay * (2 ** attempt))
            except ProviderError as exc:
                return ChatResponse(
                    provider_error=str(exc),
                    latency=time.monotonic() - started,
                )
        kind = "timeout" if isinstance(last_error, GatewayTimeout) else "transport"
        return ChatResponse(
            provider_error=f"{kind} failure after {self.retry_attempts} attempts: {last_error}",
            latency=time.monotonic() - started,
        )


def _word_count(text: str) -> int:
    return len(text.split())


def _synthesize_usage(request: ChatRequest, text: str,
                      thinking: str | None) -> TokenUsage:
    prompt = _word_count(request.system_prompt) + _word_count(request.user_prompt)
    reasoning = _word_count(thinking) if thinking else None
    return normalize_usage(_word_count(text), reasoning, prompt)


@dataclass
class MockRule:
    """One scripted behavior: substring trigger -> canned reply sequence.

    ``replies`` cycle on repeated matches. ``fail_times`` injects that many
    transient failures before the rule starts replying (for retry tests).
    ``system_contains`` optionally narrows the match to one stage's prompt.
    """

    contains: str
    replies: list[str]
    fail_times: int = 0
    system_contains: str | None = None
    thinking: str | None = None

    def matches(self, request: ChatRequest) -> bool:
        if self.contains not in request.user_prompt:
            return False
        if self.system_contains is not None:
            return self.system_contains in request.system_prompt
        return True


class ScriptedMockBackend:
    """Deterministic offline stand-in for a chat provider.

    Rules are checked in order; the first match wins. Unmatched requests
    return ``default_reply``. Matching is independent of call interleaving:
    per-rule reply cursors and failure budgets advance under a lock.
    """

    def __init__(self, rules: list[MockRule] | None = None,
                 default_reply: str = "UNMATCHED"):
        self.rules = list(rules or [])
        self.default_reply = default_reply
        self._lock = threading.Lock()
        self._cursors = [0] * len(self.rules)
        self._failures_left = [r.fail_times for r in self.rules]
        self.requests_seen = 0

    @classmethod
    def from_script(cls, script: dict) -> "ScriptedMockBackend":
        """Build from the config-file form (list of rule dicts)."""
        rules = []
        for raw in script.get("rules", []):
            replies = raw.get("replies")
            if replies is None:
                replies = [raw["reply"]]
            rules.append(MockRule(
                contains=raw["contains"],
                replies=[str(r) for r in replies],
                fail_times=int(raw.get("fail_times", 0)),
                system_contains=raw.get("system_contains"),
                thinking=raw.get("thinking"),
            ))
        return cls(rules, default_reply=script.get("default_reply", "UNMATCHED"))

    def send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests_seen += 1
            for i, rule in enumerate(self.rules):
                if not rule.matches(request):
                    continue
                if self._failures_left[i] > 0:
                    self._failures_left[i] -= 1
                    raise TransientBackendError(
                        f"scripted transient failure (rule {i})")
                reply = rule.replies[self._cursors[i] % len(rule.replies)]
                self._cursors[i] += 1
                thinking = rule.thinking
                break
            else:
                reply, thinking = self.default_reply, None
        return ChatResponse(
            text=reply,
            thinking=thinking,
            usage=_synthesize_usage(request, reply, thinking),
        )


class RandomLabelBackend:
    """Answers every request with a uniformly random boxed label A-E.

    Used for chance-baseline runs; the SplitMix64 stream makes the whole
    sequence a pure function of the seed.
    """

    GOLDEN_GAMMA = 0x9E3779B97F4A7C15

    def __init__(self, seed: int):
        self._state = seed & MASK64
        self._lock = threading.Lock()

    def _next_u64(self) -> int:
        self._state = (self._state + self.GOLDEN_GAMMA) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            label = "ABCDE"[self._next_u64() % 5]
        text = f"\\boxed{{{label}}}"
        return ChatResponse(text=text, usage=_synthesize_usage(request, text, None))


class HttpChatBackend:
    """Chat-completions adapter for OpenAI-style HTTP endpoints.

    Key material comes only from the environment (``api_key_env``); the
    endpoint, default model, and extra request fields come from config.
    """

    RETRIABLE_STATUSES = frozenset({429, 500, 502, 503, 504})

    def __init__(self, base_url: str, api_key_env: str | None = None,
                 model_id: str | None = None, extra_body: dict | None = None,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.api_key = os.environ.get(api_key_env, "") if api_key_env else ""
        self.model_id = model_id
        self.extra_body = dict(extra_body or {})
        self.session = session or requests.Session()

    def send(self, request: ChatRequest) -> ChatResponse:
        body = {
            "model": self.model_id or request.model_id,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "max_tokens": request.max_output_tokens,
        }
        if request.temperature is not None:
            body["temperature"] = request.temperature
        if request.top_p is not None:
            body["top_p"] = request.top_p
        if request.reasoning_effort:
            body["reasoning_effort"] = request.reasoning_effort
        body.update(self.extra_body)

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        try:
            http_response = self.session.post(
                f"{self.base_url}/chat/completions",
                data=json.dumps(body),
                headers=headers,
                timeout=request.per_request_timeout,
            )
        except requests.Timeout as exc:
            raise GatewayTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise TransientBackendError(str(exc)) from exc

        if http_response.status_code in self.RETRIABLE_STATUSES:
            raise TransientBackendError(
                f"HTTP {http_response.status_code}: {http_response.text[:200]}")
        if http_response.status_code != 200:
            raise ProviderError(
                f"HTTP {http_response.status_code}: {http_response.text[:200]}")

        try:
            payload = http_response.json()
            message = payload["choices"][0]["message"]
        except (ValueError, KeyError, IndexError) as exc:
            raise ProviderError(f"malformed provider payload: {exc}") from exc

        text = message.get("content") or ""
        thinking = message.get("reasoning_content")
        usage = payload.get("usage") or {}
        details = usage.get("completion_tokens_details") or {}
        reasoning_tokens = details.get("reasoning_tokens")
        completion = usage.get("completion_tokens")
        prompt_tokens = usage.get("prompt_tokens")
        if completion is None or prompt_tokens is None:
            # Provider omitted usage: record zeros rather than guessing.
            return ChatResponse(
                text=text, thinking=thinking,
                usage=normalize_usage(completion or 0, reasoning_tokens,
                                      prompt_tokens or 0))
        # Providers report completion as visible+reasoning already when the
        # details block is absent; when present, treat the detail count as
        # included and re-derive the visible share before normalizing.
        if reasoning_tokens is not None and completion >= reasoning_tokens:
            visible = completion - reasoning_tokens
        else:
            visible = completion
        return ChatResponse(
            text=text, thinking=thinking,
            usage=normalize_usage(visible, reasoning_tokens, prompt_tokens))


def backend_from_config(config: dict):
    """Instantiate a backend from one role's config block."""
    kind = config.get("type", "mock")
    if kind == "mock":
        return ScriptedMockBackend.from_script(config.get("script", {}))
    if kind == "random":
        return RandomLabelBackend(int(config.get("seed", 0)))
    if kind == "http":
        if "base_url" not in config:
            raise ConfigError("http backend requires base_url")
        return HttpChatBackend(
            base_url=config["base_url"],
            api_key_env=config.get("api_key_env"),
            model_id=config.get("model_id"),
            extra_body=config.get("extra_body"),
        )
    raise ConfigError(f"unknown backend type: {kind!r}")


def gateway_from_config(config: dict) -> Gateway:
    is_mock = config.get("type", "mock") in ("mock", "random")
    default_delay = 0.0 if is_mock else 1.0
    return Gateway(
        backend_from_config(config),
        retry_attempts=int(config.get("retry_attempts", 3)),
        retry_base_delay=float(config.get("retry_base_delay", default_delay)),
    )
