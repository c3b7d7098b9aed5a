"""Closed-loop orchestration: embed, cluster, annotate, propagate, train, evaluate, grow."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .annotator import (FewShotPool, NoisyOracleClient, analyze_anomaly, get_template, initial_pool, mock_annotate,
                        refine_shots_step1, refine_shots_step2)
from .annotator.llm import ChatClient, annotate
from .annotator.prompts import render_label_prompt
from .annotator.rca import RcaReport
from .cluster import assign_all, kmeans_best_of, select_k
from .corpus import ANOMALOUS, Corpus, LogRecord
from .detector import LR, SVM, DetectorModel, TrainHyper, fit_detector, metrics, predict_messages
from .embedder import EmbedderConfig, EmbeddingCache, RemoteEmbeddingClient, embed_batch
from .errors import InputError, MissingTruth, SingleClassData, UnparseableResponse
from .ledger import CostLedger
from .propagation import (HUMAN, LLM_VOTE, AugmentedDataset, label_clusters, propagate, select_representatives,
                          vote)

logger = logging.getLogger(__name__)

THRESHOLD_MET = "threshold-met"
MAX_ITERATIONS = "max-iterations"
EXHAUSTED = "exhausted-data"


@dataclass(frozen=True)
class LoopConfig:
    k: Optional[int] = 15  # None selects k per iteration
    k_range: tuple = (2, 30)
    m: int = 5
    threshold: float = 0.95
    initial_size: int = 500
    growth: int = 500
    max_iterations: int = 10
    seed: int = 0
    annotator: str = "mock:0.05"
    embedder: str = "hash:64"
    detector: str = SVM
    init: str = "random"
    n_init: int = 3
    max_iter: int = 300
    validation_size: int = 200
    prompt_strategy: str = "FS+CoT+SR"
    shot_capacity: int = 8
    refine_shots: bool = True
    max_in_flight: int = 4
    learning_rate: float = 0.1
    epochs: int = 50
    l2: float = 1e-4
    batch_size: int = 64
    min_df: int = 2
    keywords: Optional[tuple] = None
    embed_endpoint: Optional[str] = None
    embed_model: str = "text-embedding-ada-002"
    chat_endpoint: Optional[str] = None
    chat_model: str = "gpt-4o"
    cache_path: Optional[str] = None

    def __post_init__(self):
        # thresholds above 1 are accepted as "never stop early"
        if self.threshold <= 0:
            raise InputError("threshold must be > 0")
        if self.growth < 1:
            raise InputError("growth step must be >= 1")
        if self.m < 1 or self.initial_size < 1 or self.max_iterations < 1:
            raise InputError("m, initial_size and max_iterations must be >= 1")
        parse_annotator(self.annotator)
        if self.detector not in (LR, SVM):
            raise InputError(f"unknown detector {self.detector!r}")

    @property
    def hyper(self) -> TrainHyper:
        return TrainHyper(self.learning_rate, self.epochs, self.l2, self.batch_size, self.seed)

    def embedder_config(self) -> EmbedderConfig:
        extra = {"seed": self.seed}
        if self.embedder == "remote":
            extra.update(endpoint=self.embed_endpoint, model_name=self.embed_model, cache_path=self.cache_path)
        return EmbedderConfig.from_flag(self.embedder, **extra)

    @classmethod
    def from_mapping(cls, data: dict) -> "LoopConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if data.get("k") in ("auto", None) and "k" in data:
            data["k"] = None
        for key in ("k_range", "keywords"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "LoopConfig":
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        return cls.from_mapping(data)

    def to_mapping(self) -> dict:
        d = asdict(self)
        d["k_range"] = list(self.k_range)
        if self.keywords is not None:
            d["keywords"] = list(self.keywords)
        return d


def parse_annotator(flag: str):
    """``("mock", p)`` or ``("remote", None)``."""
    if flag == "remote":
        return "remote", None
    if flag.startswith("mock"):
        _, _, p = flag.partition(":")
        rate = float(p) if p else 0.0
        if not 0.0 <= rate <= 1.0:
            raise InputError(f"mock error rate {rate} outside [0, 1]")
        return "mock", rate
    raise InputError(f"bad annotator {flag!r}; expected remote or mock:<p>")


# --------------------------------------------------------------------------
# stage helpers
# --------------------------------------------------------------------------

class Embedder:
    """Embeds records once and serves matrix rows by record id."""

    def __init__(self, config: LoopConfig, ledger: CostLedger, client=None):
        self.cfg = config.embedder_config()
        self.ledger = ledger
        self.client = client
        self.cache = EmbeddingCache(self.cfg.cache_path) if self.cfg.mode == "remote" else None
        self._rows = {}

    def matrix(self, records: Sequence[LogRecord]) -> np.ndarray:
        todo = [r for r in records if r.id not in self._rows]
        if todo:
            if self.cfg.mode == "remote" and self.client is None:
                self.client = RemoteEmbeddingClient(self.cfg)
            before = getattr(self.client, "calls", 0)
            vecs = embed_batch([r.message for r in todo], self.cfg, self.cache, self.client, [r.id for r in todo])
            if self.client is not None:
                self.ledger.record("embedding", getattr(self.client, "calls", 0) - before)
            for r, v in zip(todo, vecs):
                self._rows[r.id] = v.values
        return np.vstack([self._rows[r.id] for r in records])


def _child_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class Labeler:
    """Labels representative records via the mock or a chat client."""

    def __init__(self, config: LoopConfig, ledger: CostLedger, client=None, validation: Sequence[LogRecord] = ()):
        self.mode, self.rate = parse_annotator(config.annotator)
        self.cfg = config
        self.ledger = ledger
        self.client = client
        self.validation = list(validation)
        self.pool: Optional[FewShotPool] = None
        if self.mode == "remote" and self.client is None:
            if not config.chat_endpoint:
                raise InputError("remote annotator needs chat_endpoint in the config")
            self.client = ChatClient(config.chat_endpoint, config.chat_model, ledger=ledger)
        if self.client is not None and getattr(self.client, "ledger", None) is not ledger:
            self.client.ledger = ledger

    def prepare(self, embedder: Embedder, model) -> None:
        """Build and (optionally) refine the few-shot pool once, using the first cluster model."""
        if self.client is None or self.pool is not None:
            return
        if not self.validation:
            raise InputError("LLM labeling needs a labeled validation set for few-shot examples")
        template = get_template(self.cfg.prompt_strategy)
        pool = initial_pool(self.validation, self.cfg.shot_capacity, self.cfg.seed)
        if self.cfg.refine_shots:
            pool = refine_shots_step1(pool, self.validation, self.client, template, self.cfg.max_in_flight)
            asg = assign_all(model, embedder.matrix(self.validation), [r.id for r in self.validation])
            pool = refine_shots_step2(pool, self.validation, asg, self.client, template)
        self.pool = pool

    def label(self, records: Sequence[LogRecord], iteration: int) -> dict:
        if self.client is None:
            rng = np.random.default_rng(_child_seed(self.cfg.seed, 7, iteration))
            out = {}
            for r in records:
                if r.truth_label is None:
                    raise MissingTruth(f"mock annotator needs truth for record {r.id}")
                out[r.id] = mock_annotate(r.truth_label, self.rate, rng)
            self.ledger.record("annotation", len(records))
            return out
        template = get_template(self.cfg.prompt_strategy)
        out = {}
        for r in records:
            try:
                out[r.id] = annotate(self.client, render_label_prompt(template, self.pool, r), r.id).label
            except UnparseableResponse:
                # an unreadable vote is dropped; the cluster is decided by the others
                logger.warning("dropping unparseable vote for record %d", r.id)
        return out


def _truth_error(aug: AugmentedDataset, by_id: dict) -> Optional[float]:
    truth = [by_id[e.record_id].truth_label for e in aug.entries]
    if any(t is None for t in truth):
        return None
    return float(np.mean([e.label != t for e, t in zip(aug.entries, truth)]))


def cluster_and_label(records: Sequence[LogRecord], X: np.ndarray, config: LoopConfig, labeler: Labeler,
                      embedder: Embedder, iteration: int, k: Optional[int] = None):
    """One pass of clustering, representative voting, and propagation."""
    n = len(records)
    ids = [r.id for r in records]
    if k is None and config.k is None:
        lo, hi = config.k_range
        report = select_k(X, (lo, min(hi, n)), _child_seed(config.seed, iteration), config.n_init, config.init,
                          config.max_iter)
        k = report.chosen_k
    k = min(k or config.k, n)
    model, asg = kmeans_best_of(X, k, config.n_init, _child_seed(config.seed, iteration), config.init,
                                config.max_iter, ids)
    reps = select_representatives(model, asg, config.m)
    labeler.prepare(embedder, model)
    by_id = {r.id: r for r in records}
    rep_records = [by_id[i] for c in sorted(reps) for i in reps[c]]
    rep_labels = labeler.label(rep_records, iteration)
    reps = {c: [i for i in ids_ if i in rep_labels] for c, ids_ in reps.items()}
    labels = label_clusters({c: v for c, v in reps.items() if v}, rep_labels)
    for c, ids_ in reps.items():
        if not ids_:
            # every vote unreadable: same outcome as a tie
            logger.warning("cluster %d has no readable votes; labeled anomalous", c)
            labels[c] = vote([ANOMALOUS], c)
    aug = propagate(model, asg, labels, reps, LLM_VOTE)
    return model, asg, aug, len(rep_records)


# --------------------------------------------------------------------------
# loop
# --------------------------------------------------------------------------

@dataclass
class LoopReport:
    rows: list = field(default_factory=list)
    stop_reason: str = ""
    test_names: tuple = ()

    def header(self) -> list:
        cols = ["iteration", "available", "k", "label_error", "val_accuracy", "val_f1"]
        for name in self.test_names:
            cols += [f"{name}_accuracy", f"{name}_f1"]
        return cols + ["llm_annotation_calls", "human_annotations", "validation_human_labels"]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for row in self.rows:
            w.writerow([_fmt(row.get(c)) for c in self.header()])
        buf.write(f"# stop_reason={self.stop_reason}\n")
        return buf.getvalue()

    def to_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if np.isnan(v) else f"{v:.6f}"
    return str(v)


def _evaluate(model: Optional[DetectorModel], corpus: Sequence[LogRecord]):
    if model is None or not corpus:
        return None
    preds, _ = predict_messages(model, [r.message for r in corpus])
    return metrics(preds, [r.truth_label for r in corpus])


def carve_validation(corpus: Corpus, size: int, seed: int):
    """Split off a labeled validation subset (seeded); returns ``(pool, validation)``."""
    labeled = [i for i, r in enumerate(corpus.records) if r.truth_label is not None]
    if len(labeled) < size:
        raise MissingTruth(f"need {size} labeled records for validation, have {len(labeled)}")
    rng = np.random.default_rng(_child_seed(seed, 11))
    pick = set(rng.choice(labeled, size=size, replace=False).tolist())
    pool = [r for i, r in enumerate(corpus.records) if i not in pick]
    val = sorted((r for i, r in enumerate(corpus.records) if i in pick), key=lambda r: r.id)
    return Corpus(pool, corpus.name), Corpus(val, "validation")


def run_loop(corpus: Corpus, config: LoopConfig, tests: Sequence[Corpus] = (), validation: Optional[Corpus] = None,
             out_dir=None, client=None, embed_client=None, resume: bool = False,
             ledger: Optional[CostLedger] = None) -> LoopReport:
    """Grow the available data until validation accuracy reaches the threshold.

    Iteration ``i`` uses the first ``initial_size + i * growth`` records of
    ``corpus`` (capped at its size). Artifacts go to ``out_dir/iter_XXX``; a
    checkpoint after every iteration lets ``resume=True`` skip finished work.
    """
    ledger = ledger if ledger is not None else CostLedger()
    if validation is None:
        corpus, validation = carve_validation(corpus, config.validation_size, config.seed)
    if len(corpus) < 1 or config.initial_size > len(corpus):
        raise InputError(f"corpus of {len(corpus)} records is smaller than the initial batch {config.initial_size}")
    if any(r.truth_label is None for r in validation):
        raise MissingTruth("validation records need truth labels")
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    report = LoopReport(test_names=tuple(t.name for t in tests))
    start = 0
    if resume and out and (out / "checkpoint.json").exists():
        ck = json.loads((out / "checkpoint.json").read_text())
        report.rows = ck["rows"]
        for key, value in ck["ledger"].items():
            setattr(ledger, key, value)
        start = len(report.rows)
        if ck.get("stop_reason"):
            report.stop_reason = ck["stop_reason"]
            return report
    else:
        ledger.record("validation", len(validation))

    embedder = Embedder(config, ledger, embed_client)
    labeler = Labeler(config, ledger, client, validation.records)
    n_total = len(corpus)
    i = start
    while True:
        size = min(config.initial_size + i * config.growth, n_total)
        try:
            row = _iteration(corpus.records[:size], i, config, embedder, labeler, validation, tests, ledger, out)
        except Exception:
            if out:
                _checkpoint(out, report, ledger, "")
            raise
        report.rows.append(row)
        if row["val_accuracy"] is not None and row["val_accuracy"] >= config.threshold:
            report.stop_reason = THRESHOLD_MET
        elif size >= n_total:
            report.stop_reason = EXHAUSTED
        elif i + 1 >= config.max_iterations:
            report.stop_reason = MAX_ITERATIONS
        if out:
            _checkpoint(out, report, ledger, report.stop_reason)
        if report.stop_reason:
            break
        i += 1
    if out:
        report.to_csv(out / "loop_report.csv")
    return report


def _checkpoint(out: Path, report: LoopReport, ledger: CostLedger, stop: str) -> None:
    doc = {"rows": report.rows, "ledger": ledger.as_dict(), "stop_reason": stop}
    (out / "checkpoint.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _iteration(records, i, config, embedder, labeler, validation, tests, ledger, out):
    X = embedder.matrix(records)
    model, asg, aug, _ = cluster_and_label(records, X, config, labeler, embedder, i)
    by_id = {r.id: r for r in records}
    label_error = _truth_error(aug, by_id)
    labels = [e.label for e in aug.entries]
    try:
        det = fit_detector([by_id[e.record_id].message for e in aug.entries], labels, config.detector,
                           config.hyper, config.keywords, config.min_df)
    except SingleClassData:
        logger.warning("iteration %d: propagated labels are single-class; detector not trained", i)
        det = None
    val = _evaluate(det, validation.records)
    row = {
        "iteration": i,
        "available": len(records),
        "k": model.k,
        "label_error": label_error,
        "val_accuracy": val.accuracy if val else None,
        "val_f1": val.f1 if val else None,
    }
    for t in tests:
        m = _evaluate(det, t.records)
        row[f"{t.name}_accuracy"] = m.accuracy if m else None
        row[f"{t.name}_f1"] = m.f1 if m else None
    row.update(llm_annotation_calls=ledger.llm_annotation_calls, human_annotations=ledger.human_annotations,
               validation_human_labels=ledger.validation_human_labels)
    if out:
        d = out / f"iter_{i:03d}"
        d.mkdir(exist_ok=True)
        model.save(d / "cluster_model.json")
        asg.to_csv(d / "assignments.csv")
        aug.save(d / "augmented.jsonl")
        if det is not None:
            det.save(d / "detector.json")
        (d / "metrics.json").write_text(json.dumps(row, indent=1, sort_keys=True) + "\n")
    logger.info("iteration %d: n=%d val_acc=%s", i, len(records), row["val_accuracy"])
    return row


# --------------------------------------------------------------------------
# label-source comparison
# --------------------------------------------------------------------------

SUPERVISED = "supervised"
CLUSTER_TRUTH = "cluster-truth"
HUMAN_FREE = "human-free"


@dataclass
class Comparison:
    rows: list  # dicts: arm, test_set, model, f1, accuracy, annotation_cost, llm_calls
    augmented: dict = field(default_factory=dict, repr=False)
    costs: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        cols = ["arm", "test_set", "model", "f1", "accuracy", "annotation_cost", "llm_calls"]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in cols])

    def f1(self, arm: str, test_set: str, model: str) -> float:
        for r in self.rows:
            if (r["arm"], r["test_set"], r["model"]) == (arm, test_set, model):
                return r["f1"]
        raise KeyError((arm, test_set, model))


class _TruthLabeler:
    """Reads truth labels of representatives and bills them as human annotations."""

    def __init__(self, ledger):
        self.ledger = ledger

    def prepare(self, *_):
        pass

    def label(self, records, iteration):
        self.ledger.record("human", len(records))
        return {r.id: r.truth_label for r in records}


def compare_label_sources(corpus: Corpus, config: LoopConfig, tests: Sequence[Corpus],
                          models: Sequence[str] = (SVM, LR), client=None, embed_client=None,
                          reference_reps: Optional[int] = None, validation: Optional[Corpus] = None) -> Comparison:
    """Train detectors on one training set under three label sources.

    Arms: ``supervised`` (truth for every record), ``cluster-truth``
    (truth of ``reference_reps`` representatives per cluster, voted and
    propagated; defaults to ``config.m``), and ``human-free`` (the configured
    annotator's votes). All arms share embeddings, clustering, and seeds.
    """
    if not corpus.has_truth():
        raise MissingTruth("comparison needs truth labels on the training corpus")
    records = corpus.records
    ledgers = {arm: CostLedger() for arm in (SUPERVISED, CLUSTER_TRUTH, HUMAN_FREE)}

    ledgers[SUPERVISED].record("human", len(records))
    labels = {SUPERVISED: [r.truth_label for r in records]}
    augmented = {}

    embedder = Embedder(config, ledgers[HUMAN_FREE], embed_client)
    X = embedder.matrix(records)
    ref_cfg = replace(config, m=reference_reps or config.m)
    _, _, aug_b, _ = cluster_and_label(records, X, ref_cfg, _TruthLabeler(ledgers[CLUSTER_TRUTH]), embedder, 0)
    aug_b = AugmentedDataset([replace(e, provenance=HUMAN if e.provenance == LLM_VOTE else e.provenance)
                              for e in aug_b.entries], aug_b.cluster_labels, aug_b.source_model)
    if (config.annotator == "remote" or client is not None) and validation is None:
        _, validation = carve_validation(corpus, config.validation_size, config.seed)
    labeler = Labeler(config, ledgers[HUMAN_FREE], client, validation.records if validation else ())
    if validation is not None:
        ledgers[HUMAN_FREE].record("validation", len(validation))
    _, _, aug_c, _ = cluster_and_label(records, X, config, labeler, embedder, 0)
    augmented[CLUSTER_TRUTH], augmented[HUMAN_FREE] = aug_b, aug_c
    for arm, aug in augmented.items():
        by_id = aug.labels_by_id()
        labels[arm] = [by_id[r.id] for r in records]

    costs = {arm: ledgers[arm].human_annotations for arm in ledgers}
    rows = []
    messages = [r.message for r in records]
    for arm in (SUPERVISED, CLUSTER_TRUTH, HUMAN_FREE):
        for kind in models:
            det = fit_detector(messages, labels[arm], kind, config.hyper, config.keywords, config.min_df)
            for t in tests:
                m = _evaluate(det, t.records)
                rows.append({"arm": arm, "test_set": t.name, "model": kind, "f1": m.f1, "accuracy": m.accuracy,
                             "annotation_cost": costs[arm], "llm_calls": ledgers[arm].llm_annotation_calls})
    return Comparison(rows, augmented, costs)


# --------------------------------------------------------------------------
# RCA
# --------------------------------------------------------------------------

def rca_batch(detector: DetectorModel, client, records: Sequence[LogRecord], out_path=None) -> list:
    """Explain every record the detector flags; writes a JSONL incident report when ``out_path`` is given."""
    records = list(records)
    if not records:
        return []
    preds, scores = predict_messages(detector, [r.message for r in records])
    reports = []
    rows = []
    for r, p, s in zip(records, preds, scores):
        if p != ANOMALOUS:
            continue
        rep: RcaReport = analyze_anomaly(client, r)
        reports.append(rep)
        rows.append({"record_id": r.id, "log": r.raw, "score": float(s), "causes": rep.causes,
                     "recommendations": rep.recommendations, "word_count": rep.word_count,
                     "parse_failed": rep.parse_failed, "raw_response": rep.raw})
    if out_path is not None:
        with Path(out_path).open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return reports


def make_mock_client(corpus_records: Sequence[LogRecord], error_rate: float, seed: int = 0, **kw) -> NoisyOracleClient:
    """Chat-protocol mock that knows the truth label of every message in ``corpus_records``."""
    return NoisyOracleClient({r.message: r.truth_label for r in corpus_records}, error_rate, seed, **kw)
