"""K-means over message embeddings, WCSS, silhouette, and k selection."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .errors import DimensionMismatch, InputError, SingleCluster, TooFewPoints

logger = logging.getLogger(__name__)

MODEL_FORMAT = "logactive.cluster_model"
MODEL_VERSION = 1
DEFAULT_MAX_ITER = 300


@dataclass
class ClusterModel:
    centroids: np.ndarray
    seed: int = 0
    iterations_run: int = 0
    converged: bool = False
    degenerate: bool = False
    init: str = "random"
    wcss_history: list = field(default_factory=list)

    def __post_init__(self):
        self.centroids = np.atleast_2d(np.asarray(self.centroids, dtype=np.float64))
        if self.k < 2:
            raise InputError("a cluster model needs k >= 2")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "k": self.k,
            "dim": self.dim,
            "seed": self.seed,
            "init": self.init,
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "wcss_history": list(self.wcss_history),
            "centroids": self.centroids.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClusterModel":
        if obj.get("format") != MODEL_FORMAT or obj.get("version") != MODEL_VERSION:
            raise InputError(f"not a v{MODEL_VERSION} cluster model file")
        return cls(
            centroids=np.asarray(obj["centroids"], dtype=np.float64).reshape(obj["k"], obj["dim"]),
            seed=obj["seed"], iterations_run=obj["iterations_run"], converged=obj["converged"],
            degenerate=obj.get("degenerate", False), init=obj.get("init", "random"),
            wcss_history=list(obj.get("wcss_history", [])),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ClusterModel":
        try:
            return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot load cluster model {path}: {exc}") from exc


@dataclass(frozen=True)
class Assignment:
    record_id: int
    cluster_id: int
    distance: float


@dataclass
class Assignments:
    """Column-oriented assignment table; iterating yields :class:`Assignment` rows."""

    record_ids: np.ndarray
    cluster_ids: np.ndarray
    distances: np.ndarray

    def __len__(self):
        return len(self.record_ids)

    def __getitem__(self, i) -> Assignment:
        return Assignment(int(self.record_ids[i]), int(self.cluster_ids[i]), float(self.distances[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.cluster_ids == cluster_id)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["record_id", "cluster_id", "distance"])
            for rid, cid, dist in zip(self.record_ids, self.cluster_ids, self.distances):
                w.writerow([int(rid), int(cid), repr(float(dist))])

    @classmethod
    def from_csv(cls, path) -> "Assignments":
        rows = list(csv.DictReader(Path(path).open(newline="")))
        return cls(
            np.array([int(r["record_id"]) for r in rows], dtype=np.int64),
            np.array([int(r["cluster_id"]) for r in rows], dtype=np.int64),
            np.array([float(r["distance"]) for r in rows], dtype=np.float64),
        )


def _as_matrix(embeddings) -> np.ndarray:
    if isinstance(embeddings, np.ndarray):
        X = embeddings
    else:
        X = np.vstack([getattr(e, "values", e) for e in embeddings])
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError("embeddings must form a 2-D matrix")
    return X


def _kmeanspp_init(X, k, rng):
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = np.einsum("ij,ij->i", X - X[idx[0]], X - X[idx[0]])
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            rest = np.setdiff1d(np.arange(n), idx)
            idx.append(int(rng.choice(rest)))
        else:
            idx.append(int(rng.choice(n, p=d2 / total)))
        diff = X - X[idx[-1]]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return X[idx].copy()


def _farthest_first_init(X, k, rng):
    idx = [int(rng.integers(X.shape[0]))]
    diff = X - X[idx[0]]
    d2 = np.einsum("ij,ij->i", diff, diff)
    for _ in range(1, k):
        idx.append(int(np.argmax(d2)))
        diff = X - X[idx[-1]]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return X[idx].copy()


INITS = ("random", "kmeans++", "farthest")


def kmeans_fit(embeddings, k: int, max_iter: int = DEFAULT_MAX_ITER, seed: int = 0,
               init: str = "random", record_ids: Optional[Sequence[int]] = None):
    """Lloyd's k-means.

    ``init="random"`` samples k distinct points uniformly; ``init="kmeans++"``
    uses D^2-weighted seeding and ``init="farthest"`` greedy farthest-first
    traversal from one random point. A cluster that empties is re-seeded at the point
    farthest from its current centroid. Returns ``(ClusterModel, Assignments)``.
    """
    X = _as_matrix(embeddings)
    n = X.shape[0]
    if k < 2:
        raise InputError("k must be >= 2")
    if n < k:
        raise TooFewPoints(f"{n} embeddings for k={k}")
    if max_iter < 1:
        raise InputError("max_iter must be >= 1")
    ids = np.arange(n, dtype=np.int64) if record_ids is None else np.asarray(record_ids, dtype=np.int64)

    if np.all(X == X[0]):
        logger.warning("all %d embeddings identical; returning %d duplicate centroids", n, k)
        model = ClusterModel(np.repeat(X[:1], k, axis=0), seed, 0, True, True, init, [0.0])
        return model, Assignments(ids, np.zeros(n, dtype=np.int64), np.zeros(n))

    rng = np.random.default_rng(seed)
    if init == "random":
        C = X[rng.choice(n, size=k, replace=False)].copy()
    elif init == "kmeans++":
        C = _kmeanspp_init(X, k, rng)
    elif init == "farthest":
        C = _farthest_first_init(X, k, rng)
    else:
        raise InputError(f"unknown init {init!r}")

    history = []
    converged = False
    t = 0
    while t < max_iter:
        labels, d2 = kernels.assign_nearest(X, C)
        history.append(float(d2.sum()))
        sums, counts = kernels.centroid_sums(X, labels, k)
        new_C = C.copy()
        nonempty = counts > 0
        new_C[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            far = np.argsort(-d2, kind="stable")[: empty.size]
            new_C[empty] = X[far]
        t += 1
        if np.array_equal(new_C, C):
            converged = True
            break
        C = new_C

    labels, d2 = kernels.assign_nearest(X, C)
    model = ClusterModel(C, seed, t, converged, False, init, history)
    return model, Assignments(ids, labels, np.sqrt(d2))


def kmeans_best_of(embeddings, k: int, n_init: int = 3, seed: int = 0, init: str = "random",
                   max_iter: int = DEFAULT_MAX_ITER, record_ids=None):
    """Run ``n_init`` seeded restarts and keep the lowest-WCSS fit."""
    X = _as_matrix(embeddings)
    best = None
    for r in range(max(1, n_init)):
        sub_seed = int(np.random.SeedSequence([seed, k, r]).generate_state(1)[0])
        model, asg = kmeans_fit(X, k, max_iter, sub_seed, init, record_ids)
        score = wcss(model, X, asg)
        if best is None or score < best[0]:
            best = (score, model, asg)
    return best[1], best[2]


def assign(model: ClusterModel, e, record_id: int = -1) -> Assignment:
    v = np.asarray(getattr(e, "values", e), dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != model.dim:
        raise DimensionMismatch(f"vector of dim {v.shape[-1]} vs centroids of dim {model.dim}")
    rid = getattr(e, "record_id", record_id)
    labels, d2 = kernels.assign_nearest(v[None, :], model.centroids)
    return Assignment(int(rid), int(labels[0]), float(np.sqrt(d2[0])))


def assign_all(model: ClusterModel, embeddings, record_ids=None) -> Assignments:
    X = _as_matrix(embeddings)
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"embeddings of dim {X.shape[1]} vs centroids of dim {model.dim}")
    ids = np.arange(X.shape[0], dtype=np.int64) if record_ids is None else np.asarray(record_ids, dtype=np.int64)
    labels, d2 = kernels.assign_nearest(X, model.centroids)
    return Assignments(ids, labels, np.sqrt(d2))


def wcss(model: ClusterModel, embeddings, assignments) -> float:
    """Sum over points of squared distance to the assigned centroid."""
    X = _as_matrix(embeddings)
    labels = assignments.cluster_ids if isinstance(assignments, Assignments) else np.asarray(assignments)
    diff = X - model.centroids[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def silhouette_samples(embeddings, labels, D=None) -> np.ndarray:
    X = _as_matrix(embeddings)
    labels = labels.cluster_ids if isinstance(labels, Assignments) else np.asarray(labels, dtype=np.int64)
    if np.unique(labels).size < 2:
        raise SingleCluster("silhouette needs at least two non-empty clusters")
    return kernels.silhouette_samples(X, labels, int(labels.max()) + 1, D)


def silhouette_mean(embeddings, labels, D=None) -> float:
    return float(np.mean(silhouette_samples(embeddings, labels, D)))


# --------------------------------------------------------------------------
# k selection
# --------------------------------------------------------------------------

@dataclass
class KSelectionReport:
    rows: list  # (k, wcss, mean_silhouette)
    elbow_k: int
    silhouette_k: int
    chosen_k: int
    models: dict = field(default_factory=dict, repr=False)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "wcss", "mean_silhouette", "elbow_k", "silhouette_k", "chosen_k"])
            for k, wc, sil in self.rows:
                w.writerow([k, repr(wc), repr(sil), self.elbow_k, self.silhouette_k, self.chosen_k])


def elbow_point(ks, values) -> int:
    """k whose (k, value) point lies farthest from the chord joining the endpoints."""
    ks = np.asarray(ks, dtype=np.float64)
    vs = np.asarray(values, dtype=np.float64)
    if ks.size <= 2:
        return int(ks[0])
    dx, dy = ks[-1] - ks[0], vs[-1] - vs[0]
    dist = np.abs(dy * (ks - ks[0]) - dx * (vs - vs[0])) / np.hypot(dx, dy)
    return int(ks[int(np.argmax(dist))])


def select_k(embeddings, k_range=(2, 30), seed: int = 0, n_init: int = 3, init: str = "random",
             max_iter: int = DEFAULT_MAX_ITER, dist_matrix_max_n: int = 6000) -> KSelectionReport:
    X = _as_matrix(embeddings)
    k_min, k_max = int(k_range[0]), int(k_range[1])
    if k_min < 2 or k_max < k_min:
        raise InputError(f"bad k range {k_range}")
    if k_max > X.shape[0]:
        raise TooFewPoints(f"k_max={k_max} exceeds {X.shape[0]} embeddings")
    D = kernels.pairwise_dist(X) if X.shape[0] <= dist_matrix_max_n else None
    rows, models = [], {}
    for k in range(k_min, k_max + 1):
        model, asg = kmeans_best_of(X, k, n_init, seed, init, max_iter)
        w = wcss(model, X, asg)
        try:
            sil = silhouette_mean(X, asg, D)
        except SingleCluster:
            sil = 0.0
        rows.append((k, w, sil))
        models[k] = (model, asg)
    ks = [r[0] for r in rows]
    elbow = elbow_point(ks, [r[1] for r in rows])
    sils = np.array([r[2] for r in rows])
    sil_k = ks[int(np.argmax(sils))]
    chosen = sil_k if abs(sil_k - elbow) <= 2 else elbow
    logger.info("select_k: elbow=%d silhouette=%d chosen=%d", elbow, sil_k, chosen)
    return KSelectionReport(rows, elbow, sil_k, chosen, models)


def partition_agreement(labels, truth) -> float:
    """Fraction of points on which two partitions agree under the best one-to-one label matching."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    _, li = np.unique(labels, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((li.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (li, ti), 1)
    r, c = linear_sum_assignment(-table)
    return float(table[r, c].sum()) / labels.size
