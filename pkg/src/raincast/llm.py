"""Pluggable LLM backends and numeric forecast parsing.

Four backend modes share one interface:

    http             POST a chat-style JSON request to a configured endpoint
    replay           answer from recorded fixtures keyed by prompt hash
    echo_payload     return the prompt's Rainfall payload (round-trip mock)
    echo_climatology return the baseline values for the prompted period

The echo backends format values with Python's shortest round-trip float
repr, so parsing a mock reply recovers the exact input vector.

Reply parsing is deliberately lenient: all decimal tokens are scanned in
reading order after a documented set of date-like patterns is excluded:

    * leading list markers  "1."  "2)"      (start of line)
    * ISO dates             2023-10-01
    * slashed dates         10/1, 10/01/2023
    * month-name dates      October 5, Oct 5th, 2023
    * "day N" labels        Day 3
    * bare 4-digit years    1900..2100

A parse succeeds only when exactly the expected number of values remain
and none are negative.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import RaincastError
from .prompts import PromptSpec, render_prompt

log = logging.getLogger(__name__)

DEFAULT_SYSTEM_MESSAGE = "You are a climate data prediction system."

_RETRYABLE_STATUS = (429, 500, 502, 503, 504)


class HarnessError(RaincastError):
    pass


class MissingFixture(HarnessError):
    def __init__(self, prompt_hash: str):
        super().__init__(f"no recorded fixture for prompt hash {prompt_hash}")
        self.prompt_hash = prompt_hash


class HashCollisionWithDifferentPrompt(HarnessError):
    def __init__(self, prompt_hash: str):
        super().__init__(f"fixture {prompt_hash} stores a different prompt")


class TransportError(HarnessError):
    def __init__(self, detail: str, status: int | None = None):
        super().__init__(detail)
        self.status = status


class MissingCredentials(HarnessError):
    def __init__(self, env_name: str):
        super().__init__(f"environment variable {env_name!r} is not set")


class CountMismatch(HarnessError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"reply contained {found} numeric values, expected {expected}")
        self.found = found
        self.expected = expected


class NegativeValue(HarnessError):
    def __init__(self, value: float):
        super().__init__(f"reply contained a negative rainfall value: {value}")
        self.value = value


class HarnessFailure(HarnessError):
    def __init__(self, reason: str, attempts: int):
        super().__init__(f"no usable forecast after {attempts} attempt(s): {reason}")
        self.reason = reason
        self.attempts = attempts


@dataclass
class LlmBackendConfig:
    mode: str = "replay"  # http | replay | echo_climatology | echo_payload
    endpoint: str = ""
    model: str = ""
    key_env: str = ""  # name of the env var holding the API key; never the key itself
    system_message: str = DEFAULT_SYSTEM_MESSAGE
    fixtures_path: str = ""
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0
    max_inflight: int = 2

    def __post_init__(self) -> None:
        if self.mode not in ("http", "replay", "echo_climatology", "echo_payload"):
            raise ValueError(f"unknown backend mode {self.mode!r}")
        if self.mode == "http" and not (self.endpoint and self.key_env):
            raise ValueError("http mode requires endpoint and key_env")
        if self.mode == "replay" and not self.fixtures_path:
            raise ValueError("replay mode requires fixtures_path")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "endpoint": self.endpoint,
            "model": self.model,
            "key_env": self.key_env,
            "system_message": self.system_message,
            "fixtures_path": self.fixtures_path,
            "temperature": self.temperature,
            "max_retries": self.max_retries,
            "timeout": self.timeout,
            "max_inflight": self.max_inflight,
        }


@dataclass
class ParsedForecast:
    values: np.ndarray  # H nonnegative mm values
    raw_reply: str
    attempts: int


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class FixtureStore:
    """Append-only prompt/reply store: one JSON file per prompt hash.

    Re-recording an identical pair is a no-op; a hash whose stored prompt
    differs raises, and the full prompt kept on disk disambiguates.
    """

    def __init__(self, root):
        self.root = Path(root)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.root / f"{key[:32]}.json"

    def record(self, prompt: str, reply: str) -> Path:
        key = prompt_hash(prompt)
        path = self._path(key)
        with self._lock:
            if path.exists():
                stored = json.loads(path.read_text())
                if stored["prompt"] != prompt:
                    raise HashCollisionWithDifferentPrompt(key)
                return path
            self.root.mkdir(parents=True, exist_ok=True)
            path.write_text(
                json.dumps(
                    {
                        "prompt_hash": key,
                        "prompt": prompt,
                        "reply": reply,
                        "recorded_at": dt.datetime.now(dt.timezone.utc).isoformat(),
                    },
                    indent=1,
                )
            )
        return path

    def lookup(self, prompt: str) -> str:
        key = prompt_hash(prompt)
        path = self._path(key)
        with self._lock:
            if not path.exists():
                raise MissingFixture(key)
            stored = json.loads(path.read_text())
        if stored["prompt"] != prompt:
            raise HashCollisionWithDifferentPrompt(key)
        return stored["reply"]


def record_fixture(prompt: str, reply: str, path) -> Path:
    return FixtureStore(path).record(prompt, reply)


def _echo_format(values) -> str:
    # Shortest round-trip repr: parsing the reply recovers the floats exactly.
    return ", ".join(repr(float(v)) for v in values)


class EchoPayloadBackend:
    def query(self, prompt: str, spec: PromptSpec | None = None) -> str:
        if spec is None or "Rainfall" not in spec.payload:
            raise HarnessError("echo_payload needs a spec with a Rainfall payload")
        return _echo_format(spec.payload["Rainfall"])


class EchoClimatologyBackend:
    """Returns the baseline values for the prompted period.

    ``provider`` maps a PromptSpec to its per-step baseline vector; the
    runner closes it over the per-city climatologies.
    """

    def __init__(self, provider):
        self.provider = provider

    def query(self, prompt: str, spec: PromptSpec | None = None) -> str:
        if spec is None:
            raise HarnessError("echo_climatology needs the prompt spec")
        return _echo_format(self.provider(spec))


class ReplayBackend:
    def __init__(self, store: FixtureStore):
        self.store = store

    def query(self, prompt: str, spec: PromptSpec | None = None) -> str:
        return self.store.lookup(prompt)


class HttpBackend:
    """Chat-completions style HTTP backend with bounded concurrency.

    The request carries a system and a user message; temperature and the
    model identifier come from the config. Retries transient statuses
    with exponential backoff. The API key is read from the configured
    environment variable at call time and never stored.
    """

    def __init__(self, cfg: LlmBackendConfig):
        self.cfg = cfg
        self._gate = threading.Semaphore(cfg.max_inflight)

    def query(self, prompt: str, spec: PromptSpec | None = None) -> str:
        import requests

        key = os.environ.get(self.cfg.key_env, "")
        if not key:
            raise MissingCredentials(self.cfg.key_env)
        body = {
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": self.cfg.system_message},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.cfg.temperature,
        }
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        last_status = None
        for attempt in range(3):
            with self._gate:
                try:
                    resp = requests.post(
                        self.cfg.endpoint, json=body, headers=headers, timeout=self.cfg.timeout
                    )
                except requests.RequestException as exc:
                    if attempt == 2:
                        raise TransportError(f"request failed: {exc}") from exc
                    time.sleep(0.5 * 2**attempt)
                    continue
            if resp.status_code in _RETRYABLE_STATUS and attempt < 2:
                time.sleep(0.5 * 2**attempt)
                last_status = resp.status_code
                continue
            if resp.status_code != 200:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}", resp.status_code)
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise TransportError(f"malformed reply: {exc}") from exc
        raise TransportError(f"gave up after retries (last status {last_status})", last_status)


def make_backend(cfg: LlmBackendConfig, baseline_provider=None):
    if cfg.mode == "http":
        return HttpBackend(cfg)
    if cfg.mode == "replay":
        return ReplayBackend(FixtureStore(cfg.fixtures_path))
    if cfg.mode == "echo_payload":
        return EchoPayloadBackend()
    if baseline_provider is None:
        raise HarnessError("echo_climatology backend needs a baseline provider")
    return EchoClimatologyBackend(baseline_provider)


def query_backend(backend, prompt: str, spec: PromptSpec | None = None) -> str:
    return backend.query(prompt, spec)


_LIST_MARKER = re.compile(r"^\s*\d{1,3}[.)]\s+", re.MULTILINE)
_MONTHS = (
    "Jan(?:uary)?|Feb(?:ruary)?|Mar(?:ch)?|Apr(?:il)?|May|Jun(?:e)?|Jul(?:y)?"
    "|Aug(?:ust)?|Sep(?:tember)?|Oct(?:ober)?|Nov(?:ember)?|Dec(?:ember)?"
)
_DATE_PATTERNS = (
    re.compile(r"\b\d{4}-\d{1,2}(?:-\d{1,2})?\b"),
    re.compile(r"\b\d{1,2}/\d{1,2}(?:/\d{2,4})?\b"),
    re.compile(
        rf"\b(?:{_MONTHS})\.?\s+\d{{1,2}}(?:st|nd|rd|th)?(?:\s*,\s*\d{{4}})?",
        re.IGNORECASE,
    ),
    re.compile(r"\bday\s+\d{1,3}\b", re.IGNORECASE),
)
_BARE_YEAR = re.compile(r"\b(?:19|20)\d{2}\b(?!\.\d)")
_NUMBER = re.compile(r"(?<![\d.])[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")


def extract_numbers(reply: str) -> list[float]:
    """All non-date numeric tokens in reading order (tokenizer rules above)."""
    text = _LIST_MARKER.sub(" ", reply)
    for pattern in _DATE_PATTERNS:
        text = pattern.sub(" ", text)
    text = _BARE_YEAR.sub(" ", text)
    return [float(tok) for tok in _NUMBER.findall(text)]


def parse_forecast(reply: str, expected_len: int) -> ParsedForecast:
    """Recover exactly ``expected_len`` nonnegative values from a reply."""
    numbers = extract_numbers(reply)
    if len(numbers) != expected_len:
        raise CountMismatch(len(numbers), expected_len)
    for v in numbers:
        if v < 0:
            raise NegativeValue(v)
    return ParsedForecast(np.array(numbers, dtype=np.float64), reply, attempts=1)


def _corrective_instruction(found: int, expected: int) -> str:
    return (
        f"\n\nYour previous reply contained {found} numeric values. "
        f"Reply again with exactly {expected} comma-separated nonnegative "
        "numeric rainfall values and no other text."
    )


def request_forecast(
    backend,
    spec: PromptSpec,
    max_retries: int = 3,
    on_reply=None,
) -> ParsedForecast:
    """Render, query, and parse; on a count mismatch re-query with a
    corrective instruction appended, up to ``max_retries`` attempts.

    ``on_reply(attempt, prompt, reply)`` is invoked for every raw reply
    before parsing, so the caller can persist it first.
    """
    base_prompt = render_prompt(spec)
    prompt = base_prompt
    last_error: HarnessError | None = None
    for attempt in range(1, max_retries + 1):
        reply = backend.query(prompt, spec)
        if on_reply is not None:
            on_reply(attempt, prompt, reply)
        try:
            parsed = parse_forecast(reply, spec.horizon)
            return ParsedForecast(parsed.values, reply, attempts=attempt)
        except CountMismatch as exc:
            last_error = exc
            log.warning("%s %s attempt %d: %s", spec.city, spec.kind, attempt, exc)
            prompt = base_prompt + _corrective_instruction(exc.found, spec.horizon)
        except NegativeValue as exc:
            raise HarnessFailure(str(exc), attempt) from exc
    raise HarnessFailure(str(last_error), max_retries)
