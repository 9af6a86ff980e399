"""Uniform access to chat-completion endpoints plus a deterministic mock.

One gateway instance multiplexes the four engine roles (generate, rank,
verify, reward_judge); each role binds to its own endpoint, model name, and
sampling settings. The HTTP side speaks the OpenAI-compatible JSON protocol;
the scripted side replays canned responses for tests and offline runs.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, replace

import requests

from .errors import (
    ConfigError,
    DomainError,
    ProviderError,
    ProviderTimeout,
    ScriptExhausted,
)

REQUEST_TAGS = ("generate", "rank", "verify", "reward_judge")

# Role -> env-var stem, e.g. CODIQ_GENERATOR_URL / CODIQ_GENERATOR_KEY.
ENV_STEMS = {
    "generate": "GENERATOR",
    "rank": "RANKER",
    "verify": "VERIFIER",
    "reward_judge": "JUDGE",
}

DEFAULT_SYSTEM_PROMPT = "You are a careful assistant. Follow the instructions exactly."

# Judging roles default to greedy sampling; generation keeps some variety.
DEFAULT_TEMPERATURES = {
    "generate": 0.7,
    "rank": 0.0,
    "verify": 0.0,
    "reward_judge": 0.0,
}


def estimate_tokens(text: str) -> int:
    """Rough fallback token count: ceil(utf-8 bytes / 4), 0 for empty text.

    Only used where the provider omits usage; budget-sensitive paths must
    rely on reported or script-declared counts instead.
    """
    if not text:
        return 0
    return math.ceil(len(text.encode("utf-8")) / 4)


def truncate_to_tokens(text: str, max_tokens: int) -> str:
    """Longest prefix of ``text`` whose estimated token count fits the cap."""
    if estimate_tokens(text) <= max_tokens:
        return text
    raw = text.encode("utf-8")[: max_tokens * 4]
    return raw.decode("utf-8", errors="ignore")


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    system_prompt: str
    user_prompt: str
    max_tokens: int
    temperature: float
    request_tag: str

    def __post_init__(self):
        if self.request_tag not in REQUEST_TAGS:
            raise DomainError(f"unknown request_tag {self.request_tag!r}")
        if not self.system_prompt or not self.user_prompt:
            raise DomainError("prompts must be non-empty")
        if self.max_tokens <= 0:
            raise DomainError("max_tokens must be > 0")
        if self.temperature < 0:
            raise DomainError("temperature must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    """Model text plus token usage.

    ``reported_usage`` is False when the counts came from the bytes/4
    estimator rather than the provider (or a script declaration).
    """

    text: str
    prompt_tokens: int
    completion_tokens: int
    reported_usage: bool

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class RoleConfig:
    """Endpoint binding for one role."""

    url: str
    api_key: str = ""
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 4096
    max_attempts: int = 3
    max_inflight: int = 8
    timeout: float = 120.0
    system_prompt: str = DEFAULT_SYSTEM_PROMPT

    def __post_init__(self):
        if not self.url:
            raise ConfigError("endpoint url must be non-empty")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.max_inflight < 1:
            raise ConfigError("max_inflight must be >= 1")


def role_config_from_env(tag: str, env: dict | None = None) -> RoleConfig:
    """Build a role binding from CODIQ_<ROLE>_URL / _KEY / _MODEL variables."""
    env = os.environ if env is None else env
    stem = ENV_STEMS[tag]
    url = env.get(f"CODIQ_{stem}_URL", "")
    if not url:
        raise ConfigError(f"CODIQ_{stem}_URL is not set for role {tag!r}")
    return RoleConfig(
        url=url,
        api_key=env.get(f"CODIQ_{stem}_KEY", ""),
        model=env.get(f"CODIQ_{stem}_MODEL", "default"),
        temperature=float(
            env.get(f"CODIQ_{stem}_TEMPERATURE", DEFAULT_TEMPERATURES[tag])
        ),
    )


class Gateway:
    """Interface both gateway implementations satisfy.

    ``complete`` never returns partially: either a full ChatResponse comes
    back or an exception is raised.
    """

    def complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    def chat(self, tag: str, user_prompt: str, system_prompt: str | None = None) -> ChatResponse:
        """Build a request from the role's configured defaults and complete it."""
        cfg = self.role_config(tag)
        request = ChatRequest(
            model_name=cfg.model,
            system_prompt=system_prompt or cfg.system_prompt,
            user_prompt=user_prompt,
            max_tokens=cfg.max_tokens,
            temperature=cfg.temperature,
            request_tag=tag,
        )
        return self.complete(request)

    def role_config(self, tag: str) -> RoleConfig:
        raise NotImplementedError


class HttpGateway(Gateway):
    """OpenAI-compatible chat-completion client with retries and a per-endpoint
    in-flight cap.

    Transient transport failures (connection errors, timeouts, 429 and 5xx
    statuses) are retried with exponential backoff up to the role's attempt
    limit; anything else surfaces immediately as a provider error.
    """

    def __init__(self, roles: dict[str, RoleConfig], *, session=None, sleep=time.sleep):
        unknown = set(roles) - set(REQUEST_TAGS)
        if unknown:
            raise ConfigError(f"unknown roles configured: {sorted(unknown)}")
        self._roles = dict(roles)
        self._session = session or requests.Session()
        self._sleep = sleep
        self._limits = {
            tag: threading.BoundedSemaphore(cfg.max_inflight)
            for tag, cfg in self._roles.items()
        }

    @classmethod
    def from_env(cls, tags=REQUEST_TAGS, env: dict | None = None) -> "HttpGateway":
        return cls({tag: role_config_from_env(tag, env) for tag in tags})

    def role_config(self, tag: str) -> RoleConfig:
        try:
            return self._roles[tag]
        except KeyError:
            raise ConfigError(f"no endpoint configured for role {tag!r}") from None

    def complete(self, request: ChatRequest) -> ChatResponse:
        cfg = self.role_config(request.request_tag)
        payload = {
            "model": request.model_name,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"

        last_error: Exception | None = None
        for attempt in range(cfg.max_attempts):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                with self._limits[request.request_tag]:
                    resp = self._session.post(
                        cfg.url, json=payload, headers=headers, timeout=cfg.timeout
                    )
            except requests.Timeout as exc:
                last_error = ProviderTimeout(f"{request.request_tag}: {exc}")
                continue
            except requests.RequestException as exc:
                last_error = ProviderError(f"{request.request_tag}: {exc}")
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = ProviderError(
                    f"{request.request_tag}: HTTP {resp.status_code}"
                )
                continue
            if resp.status_code != 200:
                raise ProviderError(
                    f"{request.request_tag}: HTTP {resp.status_code}: {resp.text[:200]}"
                )
            return self._parse(request, resp)
        raise last_error if last_error else ProviderError("no attempt was made")

    def _parse(self, request: ChatRequest, resp) -> ChatResponse:
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(
                f"{request.request_tag}: malformed completion body: {exc}"
            ) from exc
        usage = body.get("usage") or {}
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            return ChatResponse(
                text=text,
                prompt_tokens=int(usage["prompt_tokens"]),
                completion_tokens=int(usage["completion_tokens"]),
                reported_usage=True,
            )
        return ChatResponse(
            text=text,
            prompt_tokens=estimate_tokens(request.user_prompt),
            completion_tokens=estimate_tokens(text),
            reported_usage=False,
        )


@dataclass(frozen=True)
class ScriptEntry:
    tag: str
    response: str
    tokens: int | None = None

    def __post_init__(self):
        if self.tag not in REQUEST_TAGS:
            raise ConfigError(f"script entry has unknown tag {self.tag!r}")


def load_script(path) -> list[ScriptEntry]:
    """Read a JSONL mock script: {"tag", "response", "tokens"? } per line."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                entries.append(
                    ScriptEntry(
                        tag=obj["tag"],
                        response=obj["response"],
                        tokens=obj.get("tokens"),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"bad script line {lineno}: {exc}") from exc
    return entries


class ScriptedGateway(Gateway):
    """Deterministic mock: replays scripted responses in order, per tag.

    Entries declaring ``tokens`` are booked as completion tokens with a zero
    prompt count and flagged as reported usage, so budget arithmetic in tests
    is exact. Undeclared entries fall back to the bytes/4 estimator. Every
    completed request is appended to ``calls`` for assertions.
    """

    def __init__(self, entries, roles: dict[str, RoleConfig] | None = None):
        self._queues: dict[str, deque[ScriptEntry]] = {tag: deque() for tag in REQUEST_TAGS}
        for entry in entries:
            if not isinstance(entry, ScriptEntry):
                entry = ScriptEntry(**entry)
            self._queues[entry.tag].append(entry)
        self._roles = roles or {}
        self._lock = threading.Lock()
        self.calls: list[ChatRequest] = []

    @classmethod
    def from_file(cls, path, roles=None) -> "ScriptedGateway":
        return cls(load_script(path), roles=roles)

    def role_config(self, tag: str) -> RoleConfig:
        if tag in self._roles:
            return self._roles[tag]
        return RoleConfig(
            url=f"mock://{tag}",
            model=f"mock-{tag}",
            temperature=DEFAULT_TEMPERATURES[tag],
        )

    def remaining(self, tag: str) -> int:
        return len(self._queues[tag])

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            queue = self._queues[request.request_tag]
            if not queue:
                raise ScriptExhausted(
                    f"mock script exhausted for tag {request.request_tag!r}"
                )
            entry = queue.popleft()
            self.calls.append(request)
        if entry.tokens is not None:
            return ChatResponse(
                text=entry.response,
                prompt_tokens=0,
                completion_tokens=entry.tokens,
                reported_usage=True,
            )
        return ChatResponse(
            text=entry.response,
            prompt_tokens=estimate_tokens(request.user_prompt),
            completion_tokens=estimate_tokens(entry.response),
            reported_usage=False,
        )


def with_temperature(cfg: RoleConfig, temperature: float) -> RoleConfig:
    return replace(cfg, temperature=temperature)
