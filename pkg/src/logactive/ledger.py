"""Audit counts of model calls versus human labels."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, fields


@dataclass
class CostLedger:
    llm_annotation_calls: int = 0
    llm_annotation_retries: int = 0
    llm_rca_calls: int = 0
    llm_rca_retries: int = 0
    human_annotations: int = 0
    validation_human_labels: int = 0
    embedding_calls: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, kind: str, n: int = 1, retry: bool = False) -> None:
        """Count ``n`` events of ``kind`` (``annotation``, ``rca``, ``human``, ``validation``, ``embedding``)."""
        with self._lock:
            if kind == "annotation":
                self.llm_annotation_calls += n
                if retry:
                    self.llm_annotation_retries += n
            elif kind == "rca":
                self.llm_rca_calls += n
                if retry:
                    self.llm_rca_retries += n
            elif kind == "human":
                self.human_annotations += n
            elif kind == "validation":
                self.validation_human_labels += n
            elif kind == "embedding":
                self.embedding_calls += n
            else:
                raise ValueError(f"unknown ledger kind {kind!r}")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if not f.name.startswith("_")}

    def merge(self, other: "CostLedger") -> None:
        for key, value in other.as_dict().items():
            setattr(self, key, getattr(self, key) + value)
