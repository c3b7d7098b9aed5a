"""Linear SVM and logistic regression trained by seeded mini-batch (sub)gradient descent."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from ..corpus import ANOMALOUS, NORMAL
from ..errors import DimensionMismatch, InputError, SingleClassData
from .features import DEFAULT_KEYWORDS, SEMANTIC_FIELDS, FeatureExtractor
from .tfidf import TfIdfModel

LR = "logistic-regression"
SVM = "linear-svm"
MODEL_FORMAT = "logactive.detector"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 0.1
    epochs: int = 50
    l2: float = 1e-4
    batch_size: int = 64
    seed: int = 0


def labels_to_binary(labels: Sequence) -> np.ndarray:
    """anomalous -> 1, normal -> 0 (numeric input passes through)."""
    arr = np.asarray(labels)
    if arr.dtype.kind in "iub":
        return arr.astype(np.float64)
    out = np.empty(arr.shape[0], dtype=np.float64)
    for i, lab in enumerate(arr):
        if lab == ANOMALOUS:
            out[i] = 1.0
        elif lab == NORMAL:
            out[i] = 0.0
        else:
            raise InputError(f"bad label {lab!r}")
    return out


# --------------------------------------------------------------------------
# objectives and gradients; y01 in {0,1}
# --------------------------------------------------------------------------

def _scores(X, w, b):
    return np.asarray(X @ w).ravel() + b


def lr_objective(w, b, X, y01, lam):
    z = _scores(X, w, b)
    ypm = 2.0 * y01 - 1.0
    return float(np.mean(np.logaddexp(0.0, -ypm * z)) + 0.5 * lam * np.dot(w, w))


def lr_gradient(w, b, X, y01, lam):
    r = expit(_scores(X, w, b)) - y01
    n = r.shape[0]
    gw = np.asarray(X.T @ r).ravel() / n + lam * w
    return gw, float(r.sum() / n)


def svm_objective(w, b, X, y01, lam):
    ypm = 2.0 * y01 - 1.0
    margin = ypm * _scores(X, w, b)
    return float(np.mean(np.maximum(0.0, 1.0 - margin)) + 0.5 * lam * np.dot(w, w))


def svm_subgradient(w, b, X, y01, lam):
    """Hinge subgradient; a point exactly on the margin contributes nothing."""
    ypm = 2.0 * y01 - 1.0
    active = (ypm * _scores(X, w, b)) < 1.0
    coef = np.where(active, -ypm, 0.0)
    n = coef.shape[0]
    gw = np.asarray(X.T @ coef).ravel() / n + lam * w
    return gw, float(coef.sum() / n)


_OBJECTIVES = {LR: (lr_objective, lr_gradient), SVM: (svm_objective, svm_subgradient)}


@dataclass
class DetectorModel:
    kind: str
    weights: np.ndarray
    bias: float
    extractor: Optional[FeatureExtractor] = None
    threshold: float = 0.5
    loss_history: list = field(default_factory=list, repr=False)

    @property
    def dimension(self) -> int:
        return self.weights.shape[0]

    def decision(self, X) -> np.ndarray:
        if X.shape[1] != self.dimension:
            raise DimensionMismatch(f"features of dim {X.shape[1]} vs model dim {self.dimension}")
        return _scores(X, self.weights, self.bias)

    def save(self, path) -> None:
        path = Path(path)
        ext = self.extractor
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "threshold": self.threshold,
            "bias": self.bias,
            "weights": self.weights.tolist(),
        }
        if ext is not None:
            tfidf_name = path.stem + ".tfidf.tsv"
            ext.tfidf.save(path.with_name(tfidf_name))
            doc["features"] = {
                "semantic_fields": list(SEMANTIC_FIELDS),
                "keywords": list(ext.keywords),
                "mean": ext.mean.tolist(),
                "std": ext.std.tolist(),
                "tfidf": tfidf_name,
            }
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DetectorModel":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot load detector {path}: {exc}") from exc
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
            raise InputError(f"{path} is not a v{MODEL_VERSION} detector file")
        ext = None
        if "features" in doc:
            f = doc["features"]
            ext = FeatureExtractor(TfIdfModel.load(path.with_name(f["tfidf"])), tuple(f["keywords"]),
                                   np.asarray(f["mean"]), np.asarray(f["std"]))
        return cls(doc["kind"], np.asarray(doc["weights"], dtype=np.float64), float(doc["bias"]), ext,
                   float(doc["threshold"]))


def _train(kind, X, labels, hyper: TrainHyper) -> DetectorModel:
    y = labels_to_binary(labels)
    if X.shape[0] != y.shape[0]:
        raise InputError(f"{X.shape[0]} feature rows vs {y.shape[0]} labels")
    if y.min() == y.max():
        raise SingleClassData("training data needs both normal and anomalous examples")
    if sp.issparse(X):
        X = X.tocsr()
    objective, grad = _OBJECTIVES[kind]
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    rng = np.random.default_rng(hyper.seed)
    history = []
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, hyper.batch_size):
            idx = order[lo:lo + hyper.batch_size]
            gw, gb = grad(w, b, X[idx], y[idx], hyper.l2)
            w -= hyper.learning_rate * gw
            b -= hyper.learning_rate * gb
        history.append(objective(w, b, X, y, hyper.l2))
    return DetectorModel(kind, w, b, None, 0.5 if kind == LR else 0.0, history)


def train_lr(features, labels, hyper: TrainHyper = TrainHyper()) -> DetectorModel:
    """Mean logistic loss + (l2/2)||w||^2 by seeded mini-batch gradient descent."""
    return _train(LR, features, labels, hyper)


def train_svm(features, labels, hyper: TrainHyper = TrainHyper()) -> DetectorModel:
    """Mean hinge loss + (l2/2)||w||^2 by seeded mini-batch subgradient descent."""
    return _train(SVM, features, labels, hyper)


def predict_scores(model: DetectorModel, X):
    """Labels and raw scores for every row of ``X``."""
    X = X if sp.issparse(X) else np.atleast_2d(np.asarray(X, dtype=np.float64))
    score = model.decision(X)
    if model.kind == LR:
        positive = expit(score) >= model.threshold
    else:
        positive = score >= model.threshold
    labels = [ANOMALOUS if p else NORMAL for p in positive]
    return labels, score


def predict(model: DetectorModel, features):
    """``(label, score)`` for a single feature vector; the threshold itself counts as anomalous."""
    X = features if sp.issparse(features) else np.asarray(features, dtype=np.float64).reshape(1, -1)
    labels, score = predict_scores(model, X)
    return labels[0], float(score[0])


def fit_detector(messages: Sequence[str], labels: Sequence[str], kind: str = SVM,
                 hyper: TrainHyper = TrainHyper(), keywords=None, min_df: int = 2) -> DetectorModel:
    """Fit the feature extractor on ``messages`` and train a detector on its output."""
    ext = FeatureExtractor.fit(messages, DEFAULT_KEYWORDS if keywords is None else keywords, min_df)
    X = ext.transform(messages)
    trainer = {LR: train_lr, SVM: train_svm}.get(kind)
    if trainer is None:
        raise InputError(f"unknown detector kind {kind!r}")
    model = trainer(X, labels, hyper)
    model.extractor = ext
    return model


def predict_messages(model: DetectorModel, messages: Sequence[str]):
    if model.extractor is None:
        raise InputError("detector has no feature extractor attached")
    return predict_scores(model, model.extractor.transform(messages))
