import json

import pytest

from logactive.cli import main


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "cfg.yaml"
    cfg.write_text("k: 30\nepochs: 10\nn_init: 2\nvalidation_size: 100\ninitial_size: 500\ngrowth: 500\n"
                   "max_iterations: 2\nthreshold: 1.01\nannotator: 'mock:0'\n")
    assert main(["ingest", "--synthetic", "3000", "--split", "400", "--test-rates", "0.3",
                 "--out", str(d), "--seed", "1"]) == 0
    return d, cfg


def test_ingest_outputs(work):
    d, _ = work
    train = (d / "train.jsonl").read_text().splitlines()
    assert len(train) == 2600
    assert len((d / "test_0.jsonl").read_text().splitlines()) == 400


def test_stepwise_pipeline(work):
    d, cfg = work
    common = ["--out", str(d), "--config", str(cfg)]
    assert main(["embed", "--corpus", str(d / "train.jsonl"), *common]) == 0
    assert main(["select-k", "--embeddings", str(d / "embeddings.npz"), *common]) == 0
    assert (d / "k_selection.csv").exists()
    assert main(["cluster", "--embeddings", str(d / "embeddings.npz"), "--k", "30", *common]) == 0
    assert main(["annotate", "--corpus", str(d / "train.jsonl"), "--model", str(d / "cluster_model.json"),
                 "--assignments", str(d / "assignments.csv"), *common]) == 0
    assert main(["propagate", "--model", str(d / "cluster_model.json"), "--assignments", str(d / "assignments.csv"),
                 "--rep-labels", str(d / "rep_labels.jsonl"), *common]) == 0
    assert main(["flip-sweep", "--augmented", str(d / "augmented.jsonl"),
                 "--validation", str(d / "train.jsonl"), *common]) == 0
    assert (d / "flip_sweep.csv").exists()
    assert main(["train", "--corpus", str(d / "train.jsonl"), "--augmented", str(d / "augmented.jsonl"),
                 *common]) == 0
    assert main(["evaluate", "--detector", str(d / "detector.json"), "--corpus", str(d / "test_0.jsonl"),
                 *common]) == 0
    metrics = json.loads((d / "metrics.json").read_text())
    assert metrics
    assert main(["rca", "--detector", str(d / "detector.json"), "--corpus", str(d / "test_0.jsonl"), *common]) == 0
    assert (d / "incidents.jsonl").exists()


def test_loop_exit_code_when_threshold_unmet(work):
    d, cfg = work
    out = d / "loop"
    rc = main(["loop", "--corpus", str(d / "train.jsonl"), "--tests", str(d / "test_0.jsonl"),
               "--out", str(out), "--config", str(cfg)])
    assert rc == 2
    assert (out / "loop_report.csv").read_text().rstrip().endswith("stop_reason=max-iterations")


def test_loop_threshold_met_exit_zero(work, tmp_path):
    d, cfg = work
    easy = tmp_path / "easy.yaml"
    easy.write_text(cfg.read_text().replace("threshold: 1.01", "threshold: 0.5"))
    assert main(["loop", "--corpus", str(d / "train.jsonl"), "--out", str(tmp_path / "e"),
                 "--config", str(easy)]) == 0


def test_compare_writes_csv(work):
    d, cfg = work
    assert main(["compare", "--corpus", str(d / "test_0.jsonl"), "--tests", str(d / "test_0.jsonl"),
                 "--out", str(d / "cmp"), "--config", str(cfg)]) == 0
    assert (d / "cmp" / "comparison.csv").exists()


def test_input_errors_exit_4(tmp_path):
    assert main(["embed", "--corpus", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)]) == 4
    bad = tmp_path / "bad.yaml"
    bad.write_text("no_such_field: 1\n")
    assert main(["ingest", "--synthetic", "10", "--config", str(bad), "--out", str(tmp_path)]) == 4


def test_remote_failure_exit_3(tmp_path, monkeypatch):
    import logactive.embedder as emb
    init = emb.RemoteEmbeddingClient.__init__
    monkeypatch.setattr(emb.RemoteEmbeddingClient, "__init__",
                        lambda self, *a, **kw: init(self, *a, **{**kw, "sleep": lambda s: None}))
    monkeypatch.setenv(emb.EMBED_KEY_ENV, "test-key")
    (tmp_path / "c.jsonl").write_text(json.dumps({"id": 0, "message": "x", "raw": "x"}) + "\n")
    cfg = tmp_path / "remote.yaml"
    cfg.write_text("embed_endpoint: 'http://127.0.0.1:9/v1/embeddings'\n")  # nothing listens on port 9
    rc = main(["embed", "--corpus", str(tmp_path / "c.jsonl"), "--embedder", "remote", "--config", str(cfg),
               "--out", str(tmp_path)])
    assert rc == 3
