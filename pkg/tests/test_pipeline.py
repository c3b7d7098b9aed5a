import json
from collections import Counter

import numpy as np
import pytest

from logactive.annotator import ScriptedChatClient
from logactive.annotator.rca import RcaReport
from logactive.corpus import ANOMALOUS, Corpus, LogRecord, SplitSpec, split_corpus
from logactive.detector import SVM, DetectorModel, fit_detector
from logactive.errors import InputError, MissingTruth
from logactive.ledger import CostLedger
from logactive.pipeline import (CLUSTER_TRUTH, EXHAUSTED, HUMAN_FREE, MAX_ITERATIONS, SUPERVISED, THRESHOLD_MET,
                                LoopConfig, compare_label_sources, make_mock_client, parse_annotator, rca_batch,
                                run_loop)
from logactive.synthetic import make_log_corpus

FAST = dict(k=30, epochs=10, n_init=2, validation_size=100)


@pytest.fixture(scope="module")
def data():
    c = make_log_corpus(3000, 0.4, seed=21)
    train, tests = split_corpus(c, SplitSpec(test_sizes=(400,), test_anomaly_rates=(0.3,), test_names=("t",)), 0)
    return train, tests


def test_config_validation_and_yaml(tmp_path):
    with pytest.raises(InputError):
        LoopConfig(threshold=0)
    with pytest.raises(InputError):
        LoopConfig(growth=0)
    with pytest.raises(InputError):
        LoopConfig(annotator="mock:2")
    p = tmp_path / "c.yaml"
    p.write_text("k: auto\nm: 3\nannotator: 'mock:0.1'\nk_range: [2, 10]\n")
    cfg = LoopConfig.load(p)
    assert cfg.k is None and cfg.m == 3 and cfg.k_range == (2, 10)
    p.write_text("bogus: 1\n")
    with pytest.raises(InputError):
        LoopConfig.load(p)
    assert LoopConfig.from_mapping(LoopConfig().to_mapping()) == LoopConfig()


def test_parse_annotator():
    assert parse_annotator("remote") == ("remote", None)
    assert parse_annotator("mock:0.25") == ("mock", 0.25)
    with pytest.raises(InputError):
        parse_annotator("gpt")


def test_threshold_met_with_clean_mock(data, tmp_path):
    train, tests = data
    cfg = LoopConfig(annotator="mock:0", threshold=0.95, initial_size=500, growth=500, max_iterations=5, **FAST)
    rep = run_loop(train, cfg, tests, out_dir=tmp_path)
    assert rep.stop_reason == THRESHOLD_MET
    assert rep.rows[-1]["t_f1"] >= 0.95
    assert all(r["human_annotations"] == 0 for r in rep.rows)
    d = tmp_path / "iter_000"
    for name in ("cluster_model.json", "assignments.csv", "augmented.jsonl", "detector.json", "metrics.json"):
        assert (d / name).exists()
    assert (tmp_path / "loop_report.csv").read_text() == rep.to_csv_text()


def test_unreachable_threshold_hits_max_iterations(data):
    train, tests = data
    cfg = LoopConfig(annotator="mock:0", threshold=1.01, initial_size=500, growth=300, max_iterations=3, **FAST)
    rep = run_loop(train, cfg, tests)
    assert rep.stop_reason == MAX_ITERATIONS
    sizes = [r["available"] for r in rep.rows]
    assert sizes == [500, 800, 1100]
    calls = [r["llm_annotation_calls"] for r in rep.rows]
    assert all(b > a for a, b in zip(calls, calls[1:]))


def test_growth_exhausts_data(data):
    train, _ = data
    small = Corpus(train.records[:1200], "small")
    cfg = LoopConfig(annotator="mock:0", threshold=1.01, initial_size=600, growth=500, max_iterations=10, **FAST)
    rep = run_loop(small, cfg)
    assert rep.stop_reason == EXHAUSTED
    assert [r["available"] for r in rep.rows] == [600, 1100]  # 1200 - 100 validation records


def test_corpus_smaller_than_initial_batch():
    c = make_log_corpus(300, 0.4, seed=0)
    with pytest.raises(InputError):
        run_loop(c, LoopConfig(initial_size=500, validation_size=50))


def test_loop_is_deterministic(data):
    train, tests = data
    cfg = LoopConfig(annotator="mock:0.1", threshold=1.01, max_iterations=2, **FAST)
    assert run_loop(train, cfg, tests).to_csv_text() == run_loop(train, cfg, tests).to_csv_text()


def test_resume_skips_finished_iterations(data, tmp_path):
    train, tests = data
    cfg = LoopConfig(annotator="mock:0.1", threshold=1.01, max_iterations=2, **FAST)
    full = run_loop(train, cfg, tests, out_dir=tmp_path / "a")
    # a checkpoint holding only iteration 0, as if the run died during iteration 1
    one = LoopConfig(annotator="mock:0.1", threshold=1.01, max_iterations=1, **FAST)
    part_dir = tmp_path / "b"
    run_loop(train, one, tests, out_dir=part_dir)
    ck = json.loads((part_dir / "checkpoint.json").read_text())
    ck["stop_reason"] = ""
    (part_dir / "checkpoint.json").write_text(json.dumps(ck))
    resumed = run_loop(train, cfg, tests, out_dir=part_dir, resume=True)
    assert resumed.to_csv_text() == full.to_csv_text()


def test_failure_leaves_checkpoint(data, tmp_path):
    train, tests = data
    cfg = LoopConfig(annotator="mock:0", threshold=1.01, max_iterations=3, **FAST)
    unlabeled = Corpus([LogRecord(r.id, r.raw, r.message, None if i >= 700 else r.truth_label)
                        for i, r in enumerate(train.records)], "partly")
    val = Corpus(train.records[-100:], "v")
    with pytest.raises(MissingTruth):
        run_loop(unlabeled, cfg, tests, validation=val, out_dir=tmp_path)
    ck = json.loads((tmp_path / "checkpoint.json").read_text())
    assert len(ck["rows"]) == 1 and ck["stop_reason"] == ""


def test_loop_with_chat_protocol_mock(data):
    train, tests = data
    client = make_mock_client(train.records, 0.05, seed=3)
    cfg = LoopConfig(annotator="remote", threshold=1.01, max_iterations=1, shot_capacity=4, **FAST)
    ledger = CostLedger()
    rep = run_loop(train, cfg, tests, client=client, ledger=ledger)
    assert ledger.human_annotations == 0
    assert ledger.validation_human_labels == 100
    assert rep.rows[0]["llm_annotation_calls"] == ledger.llm_annotation_calls
    # without refinement only representatives are annotated (at most k*m)
    plain = CostLedger()
    run_loop(train, LoopConfig(**{**cfg.to_mapping(), "refine_shots": False}), tests,
             client=make_mock_client(train.records, 0.05, seed=3), ledger=plain)
    assert 0 < plain.llm_annotation_calls <= 30 * 5
    # refinement re-annotates the validation records outside the initial pool
    assert ledger.llm_annotation_calls - plain.llm_annotation_calls >= 100 - 4


def test_compare_costs_and_zero_noise_equivalence(data):
    train, tests = data
    cfg = LoopConfig(annotator="mock:0", **FAST)
    cmp = compare_label_sources(Corpus(train.records[:1000], "tr"), cfg, tests)
    b, c = cmp.augmented[CLUSTER_TRUTH], cmp.augmented[HUMAN_FREE]
    sizes = Counter(e.cluster_id for e in b.entries)
    # m representatives per cluster, fewer when a cluster is smaller than m
    assert cmp.costs == {SUPERVISED: 1000, CLUSTER_TRUTH: sum(min(5, s) for s in sizes.values()), HUMAN_FREE: 0}
    assert b.labels_by_id() == c.labels_by_id()
    assert len(cmp.rows) == 3 * 2 * len(tests)


def test_compare_cost_with_one_rep_per_cluster(data):
    train, tests = data
    cfg = LoopConfig(annotator="mock:0", **dict(FAST, k=15))
    cmp = compare_label_sources(Corpus(train.records[:800], "tr"), cfg, tests, models=(SVM,), reference_reps=1)
    assert (cmp.costs[SUPERVISED], cmp.costs[CLUSTER_TRUTH], cmp.costs[HUMAN_FREE]) == (800, 15, 0)


def test_compare_needs_truth():
    c = Corpus([LogRecord(i, f"m {i}", f"m {i}") for i in range(50)])
    with pytest.raises(MissingTruth):
        compare_label_sources(c, LoopConfig(), [])


# ---------------------------------------------------------------- rca_batch

GOOD = "Possible causes:\n- Disk failure.\n- Bad cable.\nRecommendations:\n- Replace the disk."


def _detector(bias):
    c = make_log_corpus(200, 0.4, seed=0)
    det = fit_detector(c.messages, c.truth(), SVM)
    return DetectorModel(SVM, np.zeros(det.dimension), bias, det.extractor, 0.0), c


def test_rca_no_anomalies_no_calls(tmp_path):
    det, c = _detector(-1.0)
    client = ScriptedChatClient([GOOD])
    assert rca_batch(det, client, c.records[:10], tmp_path / "i.jsonl") == []
    assert client.ledger.llm_rca_calls == 0


def test_rca_three_anomalies():
    det, c = _detector(1.0)
    client = ScriptedChatClient([GOOD])
    reports = rca_batch(det, client, c.records[:3])
    assert len(reports) == 3 and all(isinstance(r, RcaReport) for r in reports)
    assert client.ledger.llm_rca_calls == 3


def test_rca_mixed_parse_results(tmp_path):
    det, c = _detector(1.0)
    client = ScriptedChatClient([GOOD, "no structure here", GOOD])
    rca_batch(det, client, c.records[:3], tmp_path / "incidents.jsonl")
    rows = [json.loads(x) for x in (tmp_path / "incidents.jsonl").read_text().splitlines()]
    assert [r["parse_failed"] for r in rows] == [False, True, False]
    assert rows[1]["raw_response"] == "no structure here" and rows[1]["causes"] == []
    assert rows[0]["causes"] == ["Disk failure.", "Bad cable."]
