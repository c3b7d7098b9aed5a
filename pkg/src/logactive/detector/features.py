"""Hand-crafted semantic log features and the combined feature matrix."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .tfidf import TfIdfModel, tfidf_fit, tfidf_transform_many

DEFAULT_KEYWORDS = ("error", "fail", "failed", "failure", "refused", "denied", "fatal", "panic",
                    "timeout", "exception")

_IP = r"(?<![\d.])(?:\d{1,3}\.){3}\d{1,3}(?![\d.])"
_IP_RE = re.compile(_IP)
_PORT_RE = re.compile(_IP + r":\d{1,5}(?!\d)|\bport\s*[:=]?\s*\d{1,5}(?!\d)", re.IGNORECASE)
_PATH_RE = re.compile(r"(?<![\w.])/[\w.\-]+(?:/[\w.\-]+)+")
_DIGITS_RE = re.compile(r"\d+")

SEMANTIC_FIELDS = ("error_keyword_count", "message_length", "digit_run_count", "has_path", "has_ip", "has_port")


class SemanticFeatures(NamedTuple):
    error_keyword_count: int
    message_length: int
    digit_run_count: int
    has_path: int
    has_ip: int
    has_port: int


def keyword_regex(keywords: Sequence[str]) -> re.Pattern:
    alts = "|".join(sorted((re.escape(k) for k in keywords), key=len, reverse=True))
    return re.compile(rf"\b(?:{alts})\b", re.IGNORECASE)


def extract_semantic_features(record, keyword_list: Sequence[str] = DEFAULT_KEYWORDS,
                              _kw_re: re.Pattern = None) -> SemanticFeatures:
    message = getattr(record, "message", record)
    kw = _kw_re if _kw_re is not None else keyword_regex(keyword_list)
    return SemanticFeatures(
        error_keyword_count=len(kw.findall(message)) if keyword_list else 0,
        message_length=len(message),
        digit_run_count=len(_DIGITS_RE.findall(message)),
        has_path=int(_PATH_RE.search(message) is not None),
        has_ip=int(_IP_RE.search(message) is not None),
        has_port=int(_PORT_RE.search(message) is not None),
    )


@dataclass
class FeatureExtractor:
    """Semantic block (standardised with training statistics) followed by the TF-IDF block."""

    tfidf: TfIdfModel
    keywords: tuple = DEFAULT_KEYWORDS
    mean: np.ndarray = field(default_factory=lambda: np.zeros(len(SEMANTIC_FIELDS)))
    std: np.ndarray = field(default_factory=lambda: np.ones(len(SEMANTIC_FIELDS)))

    @property
    def dimension(self) -> int:
        return len(SEMANTIC_FIELDS) + len(self.tfidf.vocabulary)

    def semantic_matrix(self, messages: Sequence[str]) -> np.ndarray:
        kw = keyword_regex(self.keywords)
        return np.array([extract_semantic_features(m, self.keywords, kw) for m in messages],
                        dtype=np.float64).reshape(len(messages), len(SEMANTIC_FIELDS))

    def transform(self, messages: Sequence[str]) -> sp.csr_matrix:
        messages = [getattr(m, "message", m) for m in messages]
        sem = (self.semantic_matrix(messages) - self.mean) / self.std
        return sp.hstack([sp.csr_matrix(sem), tfidf_transform_many(self.tfidf, messages)], format="csr")

    @classmethod
    def fit(cls, messages: Sequence[str], keywords: Sequence[str] = DEFAULT_KEYWORDS, min_df: int = 2):
        messages = [getattr(m, "message", m) for m in messages]
        model = tfidf_fit(messages, min_df)
        ext = cls(model, tuple(keywords))
        sem = ext.semantic_matrix(messages)
        ext.mean = sem.mean(axis=0)
        std = sem.std(axis=0)
        ext.std = np.where(std > 0, std, 1.0)
        return ext
