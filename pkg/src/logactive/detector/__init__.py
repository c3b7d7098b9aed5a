"""Semantic + TF-IDF features and lightweight linear detectors."""

from .features import (DEFAULT_KEYWORDS, SEMANTIC_FIELDS, FeatureExtractor, SemanticFeatures,
                       extract_semantic_features)
from .linear import (LR, SVM, DetectorModel, TrainHyper, fit_detector, labels_to_binary, lr_gradient, lr_objective,
                     predict, predict_messages, predict_scores, svm_objective, svm_subgradient, train_lr, train_svm)
from .metrics import Metrics, metrics
from .tfidf import TfIdfModel, tfidf_fit, tfidf_tokens, tfidf_transform, tfidf_transform_many

__all__ = [
    "DEFAULT_KEYWORDS", "SEMANTIC_FIELDS", "FeatureExtractor", "SemanticFeatures", "extract_semantic_features",
    "LR", "SVM", "DetectorModel", "TrainHyper", "fit_detector", "labels_to_binary", "lr_gradient", "lr_objective",
    "predict", "predict_messages", "predict_scores", "svm_objective", "svm_subgradient", "train_lr", "train_svm",
    "Metrics", "metrics", "TfIdfModel", "tfidf_fit", "tfidf_tokens", "tfidf_transform", "tfidf_transform_many",
]
