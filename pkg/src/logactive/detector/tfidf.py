"""Smoothed TF-IDF with L2-normalised sparse rows."""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import EmptyVocabulary, InputError

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tfidf_tokens(message: str) -> list:
    return _TOKEN_RE.findall(message.lower())


@dataclass
class TfIdfModel:
    vocabulary: dict  # token -> column index
    idf: np.ndarray
    doc_count: int
    min_df: int

    def save(self, path) -> None:
        inv = sorted(self.vocabulary.items(), key=lambda kv: kv[1])
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t")
            w.writerow(["#doc_count", self.doc_count, "min_df", self.min_df])
            w.writerow(["token", "index", "idf"])
            for tok, idx in inv:
                w.writerow([tok, idx, repr(float(self.idf[idx]))])

    @classmethod
    def load(cls, path) -> "TfIdfModel":
        try:
            with Path(path).open(newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh, delimiter="\t"))
            doc_count, min_df = int(rows[0][1]), int(rows[0][3])
            body = rows[2:]
        except (OSError, IndexError, ValueError) as exc:
            raise InputError(f"cannot load TF-IDF model {path}: {exc}") from exc
        vocab = {r[0]: int(r[1]) for r in body}
        idf = np.zeros(len(body))
        for r in body:
            idf[int(r[1])] = float(r[2])
        return cls(vocab, idf, doc_count, min_df)


def tfidf_fit(messages: Sequence[str], min_df: int = 1) -> TfIdfModel:
    """Vocabulary of tokens with document frequency >= ``min_df``, indexed in sorted order.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1
    """
    if not messages:
        raise InputError("TF-IDF needs at least one document")
    df = Counter()
    for m in messages:
        df.update(set(tfidf_tokens(m)))
    kept = sorted(t for t, c in df.items() if c >= min_df)
    if not kept:
        raise EmptyVocabulary(f"min_df={min_df} leaves no tokens across {len(messages)} documents")
    n = len(messages)
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in kept])
    return TfIdfModel({t: i for i, t in enumerate(kept)}, idf, n, min_df)


def tfidf_transform(model: TfIdfModel, message: str) -> sp.csr_matrix:
    """One L2-normalised 1 x |V| row; out-of-vocabulary tokens are ignored."""
    return tfidf_transform_many(model, [message])


def tfidf_transform_many(model: TfIdfModel, messages: Sequence[str]) -> sp.csr_matrix:
    indptr = [0]
    indices = []
    data = []
    vocab = model.vocabulary
    for m in messages:
        counts = Counter(t for t in tfidf_tokens(m) if t in vocab)
        cols = sorted(vocab[t] for t in counts)
        inv = {vocab[t]: c for t, c in counts.items()}
        vals = np.array([inv[c] * model.idf[c] for c in cols], dtype=np.float64)
        norm = np.sqrt(np.dot(vals, vals)) if vals.size else 0.0
        if norm > 0:
            vals = vals / norm
        indices.extend(cols)
        data.extend(vals.tolist())
        indptr.append(len(indices))
    return sp.csr_matrix((np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr)),
                         shape=(len(messages), len(vocab)))
