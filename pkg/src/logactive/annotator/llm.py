"""Chat endpoint clients, response parsing, and the seeded mock annotator."""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import httpx
import numpy as np

from ..corpus import ANOMALOUS, NORMAL, flip_label
from ..errors import InputError, RemoteUnavailable, UnparseableResponse
from ..ledger import CostLedger
from .prompts import TERSE_REINSTRUCTION, ChatPrompt, prompt_shots, prompt_target

CHAT_KEY_ENV = "LOGACTIVE_CHAT_API_KEY"

STRICT = "strict-token"
FALLBACK = "fallback-keyword"

_KEYWORD_RE = re.compile(r"\b(normal|anomalous)\b", re.IGNORECASE)


@dataclass(frozen=True)
class AnnotationResult:
    record_id: int
    label: str
    raw_response: str
    parser_path: str


class ChatClient:
    """Client for an OpenAI-style chat-completions endpoint.

    Every HTTP attempt is recorded in ``ledger`` under the caller's
    ``purpose``; attempts after the first also count as retries.
    """

    def __init__(self, endpoint: str, model: str = "gpt-4o", api_key: Optional[str] = None,
                 api_key_env: str = CHAT_KEY_ENV, ledger: Optional[CostLedger] = None,
                 max_retries: int = 3, backoff_base: float = 0.5, timeout: float = 60.0,
                 transport: Optional[httpx.BaseTransport] = None, sleep: Callable[[float], None] = time.sleep):
        key = api_key or os.environ.get(api_key_env)
        if not key:
            raise InputError(f"chat client needs credentials in ${api_key_env}")
        self.endpoint = endpoint
        self.model = model
        self.ledger = ledger if ledger is not None else CostLedger()
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.sleep = sleep
        self._http = httpx.Client(transport=transport, timeout=timeout,
                                  headers={"Authorization": f"Bearer {key}"})

    def complete(self, prompt: ChatPrompt, purpose: str = "annotation", retry: bool = False) -> str:
        payload = {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        }
        last = None
        for attempt in range(self.max_retries + 1):
            self.ledger.record(purpose, retry=retry or attempt > 0)
            try:
                resp = self._http.post(self.endpoint, json=payload)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                else:
                    resp.raise_for_status()
                    return resp.json()["choices"][0]["message"]["content"] or ""
            except httpx.TransportError as exc:
                last = repr(exc)
            except (httpx.HTTPStatusError, KeyError, IndexError, ValueError) as exc:
                raise RemoteUnavailable(f"chat request failed: {exc}") from exc
            if attempt < self.max_retries:
                self.sleep(self.backoff_base * (2 ** attempt))
        raise RemoteUnavailable(f"chat endpoint failed after {self.max_retries + 1} attempts: {last}")


class ScriptedChatClient:
    """Offline client answering from a list of canned strings or a callable."""

    parallel_safe = False

    def __init__(self, responses, ledger: Optional[CostLedger] = None):
        self._responses = responses
        self._i = 0
        self._lock = threading.Lock()
        self.ledger = ledger if ledger is not None else CostLedger()
        self.prompts = []

    def complete(self, prompt: ChatPrompt, purpose: str = "annotation", retry: bool = False) -> str:
        self.ledger.record(purpose, retry=retry)
        with self._lock:
            self.prompts.append(prompt)
            if callable(self._responses):
                return self._responses(prompt)
            text = self._responses[min(self._i, len(self._responses) - 1)]
            self._i += 1
            return text


class NoisyOracleClient:
    """Mock labeler that knows the truth for every message.

    It answers with the true label, flipped with probability ``error_rate``.
    Messages matching any of ``hard_patterns`` are always answered wrongly
    unless an exemplar in the prompt matches the same pattern, which makes
    few-shot refinement measurably useful in tests.
    """

    parallel_safe = False

    def __init__(self, truth: dict, error_rate: float = 0.0, seed: int = 0,
                 hard_patterns: Sequence[str] = (), ledger: Optional[CostLedger] = None):
        self.truth = truth
        self.error_rate = error_rate
        self.rng = np.random.default_rng(seed)
        self.hard = [re.compile(p) for p in hard_patterns]
        self.ledger = ledger if ledger is not None else CostLedger()

    def complete(self, prompt: ChatPrompt, purpose: str = "annotation", retry: bool = False) -> str:
        self.ledger.record(purpose, retry=retry)
        target = prompt_target(prompt.user)
        label = self.truth.get(target)
        if label is None:
            return "I cannot tell."
        for pat in self.hard:
            if pat.search(target) and not any(pat.search(s) for s in prompt_shots(prompt.user)):
                return flip_label(label)
        return mock_annotate(label, self.error_rate, self.rng)


def parse_label(text: str):
    """Return ``(label, parser_path)`` or ``(None, None)`` when no verdict is found."""
    token = text.strip().lower()
    if token in (NORMAL, ANOMALOUS):
        return token, STRICT
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        return None, None
    found = _KEYWORD_RE.findall(lines[-1])
    if not found:
        return None, None
    return found[-1].lower(), FALLBACK


def annotate(client, prompt: ChatPrompt, record_id: int = -1) -> AnnotationResult:
    """Ask ``client`` for a label, retrying once with a terser instruction."""
    text = client.complete(prompt, "annotation")
    label, path = parse_label(text)
    if label is None:
        terse = ChatPrompt(prompt.system, f"{prompt.user}\n\n{TERSE_REINSTRUCTION}")
        text = client.complete(terse, "annotation", retry=True)
        label, path = parse_label(text)
        if label is None:
            raise UnparseableResponse(f"no label in response for record {record_id}", raw=text)
    return AnnotationResult(record_id, label, text, path)


def mock_annotate(truth: str, error_rate: float, rng: np.random.Generator) -> str:
    """Return ``truth``, or the opposite label with probability ``error_rate``."""
    if not 0.0 <= error_rate <= 1.0:
        raise InputError(f"error rate {error_rate} outside [0, 1]")
    if rng.random() < error_rate:
        return flip_label(truth)
    return truth
