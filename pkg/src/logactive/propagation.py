"""Representative selection, majority voting, label propagation, and the flip-distance sweep."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .cluster import Assignments, ClusterModel
from .corpus import ANOMALOUS, LABELS, NORMAL, flip_label
from .errors import EmptyValidation, InputError, MissingClusterLabel

logger = logging.getLogger(__name__)

LLM_VOTE = "llm-vote"
PROPAGATED = "propagated"
HUMAN = "human"
DEFAULT_M = 5


@dataclass(frozen=True)
class ClusterLabel:
    cluster_id: int
    label: str
    votes: tuple
    vote_margin: int


def vote(labels: Sequence[str], cluster_id: int = -1) -> ClusterLabel:
    """Majority label; an exact tie goes to anomalous."""
    if not labels:
        raise InputError("vote needs at least one label")
    for lab in labels:
        if lab not in LABELS:
            raise InputError(f"bad vote label {lab!r}")
    c = Counter(labels)
    n_a, n_n = c[ANOMALOUS], c[NORMAL]
    label = NORMAL if n_n > n_a else ANOMALOUS
    return ClusterLabel(cluster_id, label, tuple(labels), abs(n_a - n_n))


def select_representatives(model: Optional[ClusterModel], assignments: Assignments, m: int = DEFAULT_M) -> dict:
    """Per cluster, the ``min(m, size)`` members nearest the centroid (ties by record id)."""
    if m < 1:
        raise InputError("m must be >= 1")
    k = model.k if model is not None else int(assignments.cluster_ids.max()) + 1
    out = {}
    for c in range(k):
        idx = assignments.members(c)
        if idx.size == 0:
            logger.warning("cluster %d is empty; no representatives", c)
            continue
        order = np.lexsort((assignments.record_ids[idx], assignments.distances[idx]))
        out[c] = [int(assignments.record_ids[i]) for i in idx[order][:m]]
    return out


@dataclass(frozen=True)
class AugEntry:
    record_id: int
    label: str
    distance: float
    provenance: str
    cluster_id: int
    row: int  # index into the embedding matrix the assignments came from


@dataclass
class AugmentedDataset:
    entries: list
    cluster_labels: dict = field(default_factory=dict)
    source_model: Optional[ClusterModel] = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.entries)

    def labels_by_id(self) -> dict:
        return {e.record_id: e.label for e in self.entries}

    @property
    def record_ids(self) -> np.ndarray:
        return np.array([e.record_id for e in self.entries], dtype=np.int64)

    @property
    def labels(self) -> list:
        return [e.label for e in self.entries]

    @property
    def distances(self) -> np.ndarray:
        return np.array([e.distance for e in self.entries], dtype=np.float64)

    def save(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps({"record_id": e.record_id, "label": e.label, "distance": e.distance,
                                     "provenance": e.provenance, "cluster_id": e.cluster_id, "row": e.row}) + "\n")

    @classmethod
    def load(cls, path) -> "AugmentedDataset":
        entries = []
        try:
            with Path(path).open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        d = json.loads(line)
                        entries.append(AugEntry(int(d["record_id"]), d["label"], float(d["distance"]),
                                                d["provenance"], int(d["cluster_id"]), int(d.get("row", len(entries)))))
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot load augmented dataset {path}: {exc}") from exc
        return cls(entries)


def propagate(model: Optional[ClusterModel], assignments: Assignments, cluster_labels: Mapping[int, ClusterLabel],
              representatives: Optional[Mapping[int, Sequence[int]]] = None,
              rep_provenance: str = LLM_VOTE) -> AugmentedDataset:
    """Give every record its cluster's voted label.

    Records listed in ``representatives`` keep ``rep_provenance``; all others
    are marked propagated. Entries follow the order of ``assignments``.
    """
    voted = set()
    if representatives:
        for ids in representatives.values():
            voted.update(int(i) for i in ids)
    present = np.unique(assignments.cluster_ids)
    missing = [int(c) for c in present if int(c) not in cluster_labels]
    if missing:
        raise MissingClusterLabel(f"no label for non-empty clusters {missing}")
    entries = []
    for row, (rid, cid, dist) in enumerate(zip(assignments.record_ids, assignments.cluster_ids, assignments.distances)):
        rid, cid = int(rid), int(cid)
        prov = rep_provenance if rid in voted else PROPAGATED
        entries.append(AugEntry(rid, cluster_labels[cid].label, float(dist), prov, cid, row))
    return AugmentedDataset(entries, dict(cluster_labels), model)


def label_clusters(representatives: Mapping[int, Sequence[int]], rep_labels: Mapping[int, str]) -> dict:
    """Vote each cluster's representative labels into a :class:`ClusterLabel`."""
    return {c: vote([rep_labels[i] for i in ids], c) for c, ids in representatives.items()}


# --------------------------------------------------------------------------
# flip-distance sweep
# --------------------------------------------------------------------------

@dataclass
class SweepReport:
    rows: list  # (epsilon, coverage, accuracy)
    best_epsilon: float
    best_accuracy: float
    grid: tuple

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "coverage", "accuracy"])
            for eps, cov, acc in self.rows:
                w.writerow([repr(eps), repr(cov), repr(acc)])

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    @property
    def coverage(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def accuracy(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


def epsilon_grid(lo: float = 0.0, hi: float = 100.0, step: float = 1.0) -> np.ndarray:
    if step <= 0 or hi < lo:
        raise InputError(f"bad epsilon grid [{lo}, {hi}] step {step}")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def flip_sweep(aug: AugmentedDataset, validation, grid=None) -> SweepReport:
    """Accuracy/coverage when labels beyond distance epsilon are inverted.

    ``validation`` maps record id to truth label (a dict, or records with
    ``truth_label``). Among equally accurate epsilons the largest is reported
    as best, i.e. the one flipping the fewest labels.
    """
    if isinstance(validation, Mapping):
        truth = {int(k): v for k, v in validation.items() if v is not None}
    else:
        truth = {r.id: r.truth_label for r in validation if r.truth_label is not None}
    if not truth:
        raise EmptyValidation("flip sweep needs labeled validation records")
    by_id = {e.record_id: e for e in aug.entries}
    unknown = [i for i in truth if i not in by_id]
    if unknown:
        raise InputError(f"{len(unknown)} validation ids are not in the augmented dataset")
    grid = epsilon_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    grid_t = (float(grid[0]), float(grid[-1]), float(grid[1] - grid[0]) if grid.size > 1 else 0.0)

    all_d = np.sort(aug.distances)
    v_ids = sorted(truth)
    v_d = np.array([by_id[i].distance for i in v_ids])
    v_ok = np.array([by_id[i].label == truth[i] for i in v_ids])
    n_all = all_d.size
    rows = []
    for eps in grid:
        cov = np.searchsorted(all_d, eps, side="right") / n_all
        keep = v_d <= eps
        # a kept label is right iff it was right; a flipped label is right iff it was wrong
        acc = float(np.mean(np.where(keep, v_ok, ~v_ok)))
        rows.append((float(eps), float(cov), acc))
    accs = np.array([r[2] for r in rows])
    best = int(np.flatnonzero(accs == accs.max())[-1])
    return SweepReport(rows, rows[best][0], rows[best][2], grid_t)


def apply_flip(aug: AugmentedDataset, epsilon: float) -> AugmentedDataset:
    """Copy of ``aug`` with labels inverted where distance exceeds ``epsilon``."""
    entries = [AugEntry(e.record_id, flip_label(e.label) if e.distance > epsilon else e.label, e.distance,
                        e.provenance, e.cluster_id, e.row) for e in aug.entries]
    return AugmentedDataset(entries, aug.cluster_labels, aug.source_model)
