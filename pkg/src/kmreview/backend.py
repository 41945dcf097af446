"""Classification backends: the canonical HTTP protocol plus offline mocks.

Wire protocol: ``POST <endpoint>/v1/classify`` with body
``{"prompt": "<text>", "max_new_tokens": 8, "temperature": 0.0}`` and an
``Authorization: Bearer <token>`` header when the configured token variable
is set; the server answers ``{"completion": "<text>"}`` with status 200.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping

import requests

from .corpus import Label
from .errors import (
    BackendUnavailableError,
    CannedLookupError,
    GoldUnavailableError,
    ProtocolError,
    VerdictParseError,
)
from .promptkit import PromptBundle

logger = logging.getLogger(__name__)

MAX_NEW_TOKENS = 8
TEMPERATURE = 0.0
DEFAULT_TOKEN_ENV = "REVIEW_BACKEND_TOKEN"

_BACKOFF_BASE_S = 0.25
_BACKOFF_CAP_S = 4.0

_BUGGY_WORDS = ("buggy", "defective")
_CLEAN_WORDS = ("clean", "correct")


class ParseMode(Enum):
    EXACT = "exact"
    KEYWORD = "keyword"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class Verdict:
    """Parsed classification; the raw completion is kept verbatim."""

    label: Label
    raw_output: str
    latency_ms: float
    parse_mode: ParseMode


@dataclass(frozen=True)
class FineTuneProfile:
    """Descriptive training metadata attached to run records; never executed."""

    base_model_name: str = "unspecified"
    learning_rate: float = 1e-5
    weight_decay: float = 0.01
    max_input_tokens: int = 256
    mixed_precision: bool = True
    oversampled: bool = True
    optimizer_name: str = "adamw"

    def to_dict(self) -> dict:
        return {
            "base_model_name": self.base_model_name,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "max_input_tokens": self.max_input_tokens,
            "mixed_precision": self.mixed_precision,
            "oversampled": self.oversampled,
            "optimizer_name": self.optimizer_name,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FineTuneProfile":
        return cls(**payload)


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    token_env: str = DEFAULT_TOKEN_ENV
    timeout_ms: int = 30_000
    max_retries: int = 2
    max_parallel_requests: int = 1

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_parallel_requests < 1:
            raise ValueError("max_parallel_requests must be at least 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


def parse_verdict(raw: str) -> tuple[Label, ParseMode]:
    """Map a completion to a label.

    Exact: the trimmed lowercase text equals buggy/clean or 1/0 (1 is buggy,
    matching the dataset target convention). Keyword: exactly one side's
    keywords occur as words. Anything else is a parse failure.
    """
    text = raw.strip().lower()
    if text in ("buggy", "1"):
        return Label.BUGGY, ParseMode.EXACT
    if text in ("clean", "0"):
        return Label.CLEAN, ParseMode.EXACT
    words = set(re.findall(r"[a-z]+", text))
    buggy_hit = any(word in words for word in _BUGGY_WORDS)
    clean_hit = any(word in words for word in _CLEAN_WORDS)
    if buggy_hit and not clean_hit:
        return Label.BUGGY, ParseMode.KEYWORD
    if clean_hit and not buggy_hit:
        return Label.CLEAN, ParseMode.KEYWORD
    if buggy_hit and clean_hit:
        raise VerdictParseError(f"completion mentions both classes: {raw!r}")
    raise VerdictParseError(f"completion mentions neither class: {raw!r}")


def backoff_delays(max_retries: int, base_s: float = _BACKOFF_BASE_S) -> list[float]:
    """Monotone non-decreasing delays, one per retry."""
    return [min(base_s * (2**attempt), _BACKOFF_CAP_S) for attempt in range(max_retries)]


class Backend:
    """Interface every backend implements; mocks bind run context first."""

    needs_gold = False
    needs_analysis = False
    max_parallel = 1

    def complete(self, bundle: PromptBundle) -> str:
        raise NotImplementedError

    def bind_run(
        self,
        gold_by_id: Mapping[int, Label] | None = None,
        defect_ids: frozenset[int] | set[int] | None = None,
    ) -> None:
        """Inject per-run context; the default backend ignores it."""

    def descriptor(self) -> dict:
        raise NotImplementedError


class HttpBackend(Backend):
    """Client for the canonical classify protocol with retry-on-transport-failure."""

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        self.config = config
        self.max_parallel = config.max_parallel_requests
        self._session = session or requests.Session()

    def descriptor(self) -> dict:
        return {"kind": "http", "endpoint": self.config.endpoint}

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, bundle: PromptBundle) -> str:
        url = self.config.endpoint.rstrip("/") + "/v1/classify"
        payload = {
            "prompt": bundle.text,
            "max_new_tokens": MAX_NEW_TOKENS,
            "temperature": TEMPERATURE,
        }
        delays = backoff_delays(self.config.max_retries)
        attempts = self.config.max_retries + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            try:
                response = self._session.post(
                    url,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout_ms / 1000.0,
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.debug("transport failure (attempt %d/%d): %s", attempt + 1, attempts, exc)
                if attempt < attempts - 1:
                    time.sleep(delays[attempt])
                continue
            if not 200 <= response.status_code < 300:
                raise ProtocolError(
                    f"backend answered status {response.status_code}",
                    status=response.status_code,
                )
            try:
                completion = response.json()["completion"]
            except (ValueError, KeyError) as exc:
                raise ProtocolError("backend response is not a completion object") from exc
            if not isinstance(completion, str):
                raise ProtocolError("completion field is not a string")
            return completion
        raise BackendUnavailableError(
            f"backend unreachable after {attempts} attempt(s): {last_error}"
        ) from last_error


class _MockBackend(Backend):
    mode = "mock"

    def descriptor(self) -> dict:
        return {"kind": "mock", "mode": self.mode}


class EchoGoldBackend(_MockBackend):
    """Answers every sample's true label; needs gold labels bound by the runner."""

    mode = "echo-gold"
    needs_gold = True

    def __init__(self):
        self._gold: Mapping[int, Label] | None = None

    def bind_run(self, gold_by_id=None, defect_ids=None) -> None:
        if gold_by_id is not None:
            self._gold = dict(gold_by_id)

    def _lookup(self, sample_id: int) -> Label:
        if self._gold is None or sample_id not in self._gold:
            raise GoldUnavailableError(
                f"no gold label available for sample {sample_id}; gold-echoing mocks "
                "only work over labeled datasets"
            )
        return self._gold[sample_id]

    def complete(self, bundle: PromptBundle) -> str:
        return self._lookup(bundle.sample_id).value


class InvertGoldBackend(EchoGoldBackend):
    mode = "invert-gold"

    def complete(self, bundle: PromptBundle) -> str:
        return self._lookup(bundle.sample_id).opposite().value


class AlwaysBuggyBackend(_MockBackend):
    mode = "always-buggy"

    def complete(self, bundle: PromptBundle) -> str:
        return Label.BUGGY.value


class FindingsOracleBackend(_MockBackend):
    """Answers buggy exactly when the analyzer found a Defect-severity finding."""

    mode = "findings-oracle"
    needs_analysis = True

    def __init__(self):
        self._defect_ids: frozenset[int] | None = None

    def bind_run(self, gold_by_id=None, defect_ids=None) -> None:
        if defect_ids is not None:
            self._defect_ids = frozenset(defect_ids)

    def complete(self, bundle: PromptBundle) -> str:
        if self._defect_ids is None:
            raise GoldUnavailableError(
                "findings-oracle mock used before the runner bound analysis results"
            )
        return (
            Label.BUGGY if bundle.sample_id in self._defect_ids else Label.CLEAN
        ).value


class CannedBackend(_MockBackend):
    """Replays stored completions keyed by sample id (as a string)."""

    mode = "canned"

    def __init__(self, path: str | Path):
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(payload, dict):
            raise CannedLookupError(f"{path}: canned file must map sample id to completion")
        self._completions = {str(key): str(value) for key, value in payload.items()}
        self._path = str(path)

    def descriptor(self) -> dict:
        return {"kind": "mock", "mode": self.mode, "path": self._path}

    def complete(self, bundle: PromptBundle) -> str:
        key = str(bundle.sample_id)
        if key not in self._completions:
            raise CannedLookupError(f"no canned completion for sample {key}")
        return self._completions[key]


MOCK_MODES = ("echo-gold", "invert-gold", "always-buggy", "findings-oracle", "canned")


def mock_backend(mode: str, canned_path: str | Path | None = None) -> Backend:
    """Build a deterministic offline backend by mode name."""
    if mode == "echo-gold":
        return EchoGoldBackend()
    if mode == "invert-gold":
        return InvertGoldBackend()
    if mode == "always-buggy":
        return AlwaysBuggyBackend()
    if mode == "findings-oracle":
        return FindingsOracleBackend()
    if mode == "canned":
        if canned_path is None:
            raise ValueError("canned mode needs a completions file")
        return CannedBackend(canned_path)
    raise ValueError(f"unknown mock mode {mode!r}; choose from {', '.join(MOCK_MODES)}")


def classify(bundle: PromptBundle, backend: Backend | BackendConfig) -> Verdict:
    """Send one prompt, parse the completion, and record the latency."""
    if isinstance(backend, BackendConfig):
        backend = HttpBackend(backend)
    start = time.perf_counter()
    raw = backend.complete(bundle)
    latency_ms = (time.perf_counter() - start) * 1000.0
    label, mode = parse_verdict(raw)
    return Verdict(label=label, raw_output=raw, latency_ms=latency_ms, parse_mode=mode)
