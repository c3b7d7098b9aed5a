"""Command-line entry point; each stage reads and writes plain files so runs can be resumed by hand."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .annotator import NoisyOracleClient, ScriptedChatClient, get_template, initial_pool, mock_annotate
from .annotator.llm import ChatClient, annotate
from .annotator.prompts import render_label_prompt
from .cluster import Assignments, ClusterModel, kmeans_best_of, select_k
from .corpus import (Corpus, SplitSpec, load_corpus, load_format_spec, read_corpus_file, save_corpus,
                     split_corpus)
from .detector import DetectorModel, fit_detector, metrics, predict_messages
from .embedder import load_embeddings, save_embeddings
from .errors import InputError, LogActiveError, RemoteUnavailable, UnparseableResponse
from .ledger import CostLedger
from .pipeline import (THRESHOLD_MET, Embedder, LoopConfig, compare_label_sources, parse_annotator, rca_batch,
                       run_loop)
from .propagation import AugmentedDataset, flip_sweep, label_clusters, propagate, select_representatives
from .synthetic import make_log_corpus

EXIT_OK = 0
EXIT_THRESHOLD = 2
EXIT_REMOTE = 3
EXIT_INPUT = 4

logger = logging.getLogger("logactive")


def offline_rca_response(prompt) -> str:
    """Deterministic stand-in for an RCA model, used with ``--annotator mock:*``."""
    return ("Possible causes:\n"
            "- A service or device named in the entry failed or refused a request.\n"
            "- Resource exhaustion or a misconfiguration on the reporting node.\n"
            "Recommendations:\n"
            "- Check the service and hardware status on the node.\n"
            "- Correlate with neighboring log entries and restart or repair the component.")


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _config(args) -> LoopConfig:
    cfg = LoopConfig.load(args.config) if args.config else LoopConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.annotator:
        over["annotator"] = args.annotator
    if args.embedder:
        over["embedder"] = args.embedder
    return replace(cfg, **over) if over else cfg


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _chat_client(cfg: LoopConfig, ledger: CostLedger, records=()):
    mode, rate = parse_annotator(cfg.annotator)
    if mode == "remote":
        if not cfg.chat_endpoint:
            raise InputError("remote annotator needs chat_endpoint in the config")
        return ChatClient(cfg.chat_endpoint, cfg.chat_model, ledger=ledger)
    return NoisyOracleClient({r.message: r.truth_label for r in records}, rate, cfg.seed, ledger=ledger)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_ingest(args, cfg):
    out = _out(args)
    if args.synthetic:
        corpus = make_log_corpus(args.synthetic, args.anomaly_rate, cfg.seed)
    elif args.input:
        spec = load_format_spec(args.format_spec) if args.format_spec else None
        corpus = load_corpus(args.input, args.format, spec)
    else:
        raise InputError("ingest needs --input or --synthetic")
    save_corpus(corpus, out / "corpus.jsonl")
    c = corpus.counts
    print(f"records={len(corpus)} benign={c.benign} anomalous={c.anomalous} unlabeled={c.unlabeled}")
    if args.split:
        sizes = tuple(int(x) for x in args.split.split(","))
        rates = tuple(float(x) for x in args.test_rates.split(","))
        if len(sizes) != len(rates):
            raise InputError("--split and --test-rates need the same number of entries")
        spec = SplitSpec(test_sizes=sizes, test_anomaly_rates=rates, test_names=tuple(f"test_{i}" for i in
                                                                                     range(len(sizes))))
        train, tests = split_corpus(corpus, spec, cfg.seed)
        if args.train_size:
            train = Corpus(train.records[:args.train_size], train.name)
        save_corpus(train, out / "train.jsonl")
        for t in tests:
            save_corpus(t, out / f"{t.name}.jsonl")
        print(f"train={len(train)} " + " ".join(f"{t.name}={len(t)}" for t in tests))
    return EXIT_OK


def cmd_embed(args, cfg):
    corpus = read_corpus_file(args.corpus)
    ledger = CostLedger()
    X = Embedder(cfg, ledger).matrix(corpus.records)
    save_embeddings(_out(args) / "embeddings.npz", corpus.ids, X)
    print(f"embedded {X.shape[0]} x {X.shape[1]} (remote calls {ledger.embedding_calls})")
    return EXIT_OK


def cmd_select_k(args, cfg):
    ids, X = load_embeddings(args.embeddings)
    lo, hi = cfg.k_range
    rep = select_k(X, (lo, min(hi, len(ids))), cfg.seed, cfg.n_init, cfg.init, cfg.max_iter)
    rep.to_csv(_out(args) / "k_selection.csv")
    print(f"elbow_k={rep.elbow_k} silhouette_k={rep.silhouette_k} chosen_k={rep.chosen_k}")
    return EXIT_OK


def cmd_cluster(args, cfg):
    ids, X = load_embeddings(args.embeddings)
    k = args.k or cfg.k
    if k is None:
        raise InputError("cluster needs --k or a fixed k in the config")
    model, asg = kmeans_best_of(X, k, cfg.n_init, cfg.seed, cfg.init, cfg.max_iter, ids)
    out = _out(args)
    model.save(out / "cluster_model.json")
    asg.to_csv(out / "assignments.csv")
    print(f"k={model.k} iterations={model.iterations_run} converged={model.converged}")
    return EXIT_OK


def cmd_annotate(args, cfg):
    corpus = read_corpus_file(args.corpus)
    model = ClusterModel.load(args.model)
    asg = Assignments.from_csv(args.assignments)
    reps = select_representatives(model, asg, cfg.m)
    by_id = corpus.by_id()
    ledger = CostLedger()
    mode, rate = parse_annotator(cfg.annotator)
    rows = []
    if mode == "mock":
        rng = np.random.default_rng(cfg.seed)
        for c in sorted(reps):
            for rid in reps[c]:
                rows.append({"record_id": rid, "cluster_id": c, "label": mock_annotate(by_id[rid].truth_label, rate, rng)})
        ledger.record("annotation", len(rows))
    else:
        if not args.validation:
            raise InputError("remote annotation needs --validation for few-shot examples")
        val = read_corpus_file(args.validation)
        client = _chat_client(cfg, ledger)
        pool = initial_pool(val.records, cfg.shot_capacity, cfg.seed)
        template = get_template(cfg.prompt_strategy)
        for c in sorted(reps):
            for rid in reps[c]:
                try:
                    res = annotate(client, render_label_prompt(template, pool, by_id[rid]), rid)
                except UnparseableResponse:
                    logger.warning("no readable label for record %d", rid)
                    continue
                rows.append({"record_id": rid, "cluster_id": c, "label": res.label})
    with (_out(args) / "rep_labels.jsonl").open("w") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    print(f"labeled {len(rows)} representatives; llm calls {ledger.llm_annotation_calls}")
    return EXIT_OK


def cmd_propagate(args, cfg):
    model = ClusterModel.load(args.model)
    asg = Assignments.from_csv(args.assignments)
    reps, labels = {}, {}
    for line in Path(args.rep_labels).read_text().splitlines():
        if line.strip():
            r = json.loads(line)
            reps.setdefault(int(r["cluster_id"]), []).append(int(r["record_id"]))
            labels[int(r["record_id"])] = r["label"]
    aug = propagate(model, asg, label_clusters(reps, labels), reps)
    aug.save(_out(args) / "augmented.jsonl")
    n_anom = sum(e.label == "anomalous" for e in aug.entries)
    print(f"propagated {len(aug.entries)} labels ({n_anom} anomalous)")
    return EXIT_OK


def cmd_flip_sweep(args, cfg):
    aug = AugmentedDataset.load(args.augmented)
    rep = flip_sweep(aug, read_corpus_file(args.validation).records)
    rep.to_csv(_out(args) / "flip_sweep.csv")
    print(f"best_epsilon={rep.best_epsilon} best_accuracy={rep.best_accuracy:.4f}")
    return EXIT_OK


def cmd_train(args, cfg):
    corpus = read_corpus_file(args.corpus)
    if args.augmented:
        by_id = AugmentedDataset.load(args.augmented).labels_by_id()
        labels = [by_id[r.id] for r in corpus.records]
    else:
        labels = corpus.truth()
        if any(x is None for x in labels):
            raise InputError("train without --augmented needs truth labels on every record")
    det = fit_detector(corpus.messages, labels, args.detector or cfg.detector, cfg.hyper, cfg.keywords, cfg.min_df)
    det.save(_out(args) / "detector.json")
    print(f"trained {det.kind} on {len(corpus)} records, {det.dimension} features")
    return EXIT_OK


def cmd_evaluate(args, cfg):
    det = DetectorModel.load(args.detector)
    results = {}
    for path in args.corpus:
        corpus = read_corpus_file(path)
        preds, _ = predict_messages(det, corpus.messages)
        results[corpus.name or Path(path).stem] = metrics(preds, corpus.truth()).as_dict()
    _write_json(_out(args) / "metrics.json", results)
    for name, m in results.items():
        print(f"{name}: accuracy={m['accuracy']:.4f} f1={m['f1']:.4f}")
    return EXIT_OK


def cmd_loop(args, cfg):
    corpus = read_corpus_file(args.corpus)
    tests = [_named(p) for p in args.tests]
    val = read_corpus_file(args.validation) if args.validation else None
    client = None
    if parse_annotator(cfg.annotator)[0] == "remote":
        client = _chat_client(cfg, CostLedger())
    report = run_loop(corpus, cfg, tests, val, _out(args), client=client, resume=args.resume)
    sys.stdout.write(report.to_csv_text())
    return EXIT_OK if report.stop_reason == THRESHOLD_MET else EXIT_THRESHOLD


def cmd_compare(args, cfg):
    train = read_corpus_file(args.corpus)
    tests = [_named(p) for p in args.tests]
    client = None
    if parse_annotator(cfg.annotator)[0] == "remote":
        client = _chat_client(cfg, CostLedger())
    cmp = compare_label_sources(train, cfg, tests, client=client)
    cmp.to_csv(_out(args) / "comparison.csv")
    for r in cmp.rows:
        print(f"{r['arm']:>14} {r['test_set']:>8} {r['model']:>20} f1={r['f1']:.4f} cost={r['annotation_cost']}")
    return EXIT_OK


def cmd_rca(args, cfg):
    det = DetectorModel.load(args.detector)
    corpus = read_corpus_file(args.corpus)
    ledger = CostLedger()
    if parse_annotator(cfg.annotator)[0] == "remote":
        client = _chat_client(cfg, ledger)
    else:
        client = ScriptedChatClient(offline_rca_response, ledger)
    reports = rca_batch(det, client, corpus.records, _out(args) / "incidents.jsonl")
    failed = sum(r.parse_failed for r in reports)
    print(f"{len(reports)} incident reports ({failed} unparsed); rca calls {ledger.llm_rca_calls}")
    return EXIT_OK


def _named(path) -> Corpus:
    c = read_corpus_file(path)
    return Corpus(c.records, Path(path).stem)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with LoopConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--annotator", help="remote or mock:<p>")
    common.add_argument("--embedder", help="remote or hash:<dim>")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="logactive", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="parse logs into a JSONL corpus, optionally split")
    s.add_argument("--input")
    s.add_argument("--format", default="jsonl", choices=["jsonl", "labeled-lines"])
    s.add_argument("--format-spec", help="YAML header-pattern spec for labeled-lines input")
    s.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic records instead")
    s.add_argument("--anomaly-rate", type=float, default=0.4)
    s.add_argument("--split", help="comma-separated test set sizes, e.g. 5000,5000")
    s.add_argument("--test-rates", default="0.218,0.40")
    s.add_argument("--train-size", type=int)
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("embed", parents=[common], help="embed a corpus")
    s.add_argument("--corpus", required=True)
    s.set_defaults(fn=cmd_embed)

    s = sub.add_parser("select-k", parents=[common], help="elbow + silhouette search over k")
    s.add_argument("--embeddings", required=True)
    s.set_defaults(fn=cmd_select_k)

    s = sub.add_parser("cluster", parents=[common], help="fit k-means")
    s.add_argument("--embeddings", required=True)
    s.add_argument("--k", type=int)
    s.set_defaults(fn=cmd_cluster)

    s = sub.add_parser("annotate", parents=[common], help="label cluster representatives")
    s.add_argument("--corpus", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--assignments", required=True)
    s.add_argument("--validation")
    s.set_defaults(fn=cmd_annotate)

    s = sub.add_parser("propagate", parents=[common], help="vote and propagate cluster labels")
    s.add_argument("--model", required=True)
    s.add_argument("--assignments", required=True)
    s.add_argument("--rep-labels", required=True)
    s.set_defaults(fn=cmd_propagate)

    s = sub.add_parser("flip-sweep", parents=[common], help="accuracy/coverage versus flip distance")
    s.add_argument("--augmented", required=True)
    s.add_argument("--validation", required=True)
    s.set_defaults(fn=cmd_flip_sweep)

    s = sub.add_parser("train", parents=[common], help="train a detector")
    s.add_argument("--corpus", required=True)
    s.add_argument("--augmented", help="propagated labels (default: truth labels)")
    s.add_argument("--detector", choices=["linear-svm", "logistic-regression"])
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="score a detector on labeled corpora")
    s.add_argument("--detector", required=True)
    s.add_argument("--corpus", required=True, nargs="+")
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("loop", parents=[common], help="run the threshold feedback loop")
    s.add_argument("--corpus", required=True)
    s.add_argument("--tests", nargs="*", default=[])
    s.add_argument("--validation")
    s.add_argument("--resume", action="store_true")
    s.set_defaults(fn=cmd_loop)

    s = sub.add_parser("compare", parents=[common], help="compare supervised, cluster-truth and human-free labels")
    s.add_argument("--corpus", required=True)
    s.add_argument("--tests", nargs="+", required=True)
    s.set_defaults(fn=cmd_compare)

    s = sub.add_parser("rca", parents=[common], help="root-cause reports for flagged records")
    s.add_argument("--detector", required=True)
    s.add_argument("--corpus", required=True)
    s.set_defaults(fn=cmd_rca)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        return args.fn(args, cfg)
    except (RemoteUnavailable, UnparseableResponse) as exc:
        print(f"error: remote failure: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (LogActiveError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
