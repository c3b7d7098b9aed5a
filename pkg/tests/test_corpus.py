import json

import pytest

from logactive.corpus import (ANOMALOUS, NORMAL, Corpus, FormatSpec, LogRecord, SplitSpec, load_corpus,
                              load_format_spec, normalize_label, parse_log_line, read_corpus_file, save_corpus,
                              split_corpus)
from logactive.errors import FormatError, InfeasibleSplit, InputError, MalformedLine
from logactive.synthetic import make_log_corpus

TB_LINE = ("- 1131566461 2005.11.09 tn230 Nov 9 12:01:01 tn230/tn230 "
           "pbs_mom: Connection refused (111) in open_demux")


def test_thunderbird_line_strips_header_and_reads_label():
    rec = parse_log_line(TB_LINE, FormatSpec.thunderbird(), 3)
    assert rec.id == 3
    assert rec.message == "pbs_mom: Connection refused (111) in open_demux"
    assert "Connection refused (111)" in rec.message
    assert rec.truth_label == NORMAL
    assert rec.message in rec.raw
    assert rec.fields["node"] == "tn230"


def test_thunderbird_alert_tag_means_anomalous():
    rec = parse_log_line("KERNDTLB" + TB_LINE[1:], FormatSpec.thunderbird())
    assert rec.truth_label == ANOMALOUS


def test_identity_format_keeps_whole_line_and_no_label():
    rec = parse_log_line("x")
    assert rec.message == "x" and rec.raw == "x" and rec.truth_label is None


def test_empty_line_is_malformed():
    with pytest.raises(MalformedLine):
        parse_log_line("")


def test_header_mismatch_is_malformed():
    with pytest.raises(MalformedLine):
        parse_log_line("not a thunderbird line", FormatSpec.thunderbird())


def test_label_aliases():
    assert normalize_label("n") == NORMAL
    assert normalize_label("a") == ANOMALOUS
    assert normalize_label("-") == NORMAL
    assert normalize_label(None) is None
    with pytest.raises(ValueError):
        normalize_label("perhaps")


def test_jsonl_counts(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text("\n".join(json.dumps({"raw": f"m{i}", "label": lab}) for i, lab in enumerate("nan")) + "\n")
    c = load_corpus(p)
    assert tuple(c.counts) == (2, 1, 0)
    assert [r.id for r in c] == [0, 1, 2]


def test_counts_match_table_ii_training_set(tmp_path):
    # 10,000 lines, 6,000 anomalous -> 4,000 benign / 6,000 anomalous
    p = tmp_path / "train.jsonl"
    with p.open("w") as fh:
        for i in range(10_000):
            fh.write(json.dumps({"raw": f"line {i}", "label": "a" if i < 6000 else "n"}) + "\n")
    assert tuple(load_corpus(p).counts) == (4000, 6000, 0)


def test_missing_file_is_input_error(tmp_path):
    with pytest.raises(InputError):
        load_corpus(tmp_path / "nope.jsonl")


def test_bad_jsonl_reports_line_number(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"raw": "ok"}\n{"raw": \n')
    with pytest.raises(FormatError) as exc:
        load_corpus(p)
    assert exc.value.line_no == 2


def test_labeled_lines_quarantines_malformed(tmp_path):
    p = tmp_path / "tb.log"
    p.write_text(TB_LINE + "\ngarbage line\n" + TB_LINE + "\n")
    c = load_corpus(p, "labeled-lines")
    assert len(c) == 2 and [r.id for r in c] == [0, 1]
    q = (tmp_path / "tb.log.quarantine").read_text().splitlines()
    assert len(q) == 1 and json.loads(q[0])["line_no"] == 2


def test_format_spec_from_yaml(tmp_path):
    p = tmp_path / "fmt.yaml"
    p.write_text("format:\n  preset: thunderbird\n  normal_values: ['-', 'OK']\n")
    spec = load_format_spec(p)
    assert spec.label_group == "label" and spec.normal_values == ("-", "OK")


def test_save_and_read_roundtrip(tmp_path, small_corpus):
    save_corpus(small_corpus, tmp_path / "c.jsonl")
    back = read_corpus_file(tmp_path / "c.jsonl")
    assert back.records == small_corpus.records


def test_record_requires_raw():
    with pytest.raises(ValueError):
        LogRecord(0, "", "")


def test_split_exact_rates_and_determinism():
    c = make_log_corpus(3000, 0.4, seed=2)
    spec = SplitSpec(test_sizes=(500, 500), test_anomaly_rates=(0.218, 0.40))
    train, tests = split_corpus(c, spec, seed=5)
    assert [t.counts.anomalous for t in tests] == [109, 200]
    assert [len(t) for t in tests] == [500, 500]
    assert len(train) == 2000
    ids = set(train.ids.tolist())
    for t in tests:
        assert not ids & set(t.ids.tolist())
    train2, tests2 = split_corpus(c, spec, seed=5)
    assert train2.records == train.records and tests2[0].records == tests[0].records


def test_split_infeasible():
    c = make_log_corpus(100, 0.1, seed=0)
    with pytest.raises(InfeasibleSplit):
        split_corpus(c, SplitSpec(test_sizes=(50,), test_anomaly_rates=(0.5,)), 0)


def test_corpus_counts_include_unlabeled():
    c = Corpus([LogRecord(0, "a", "a"), LogRecord(1, "b", "b", NORMAL)])
    assert tuple(c.counts) == (1, 0, 1)
    assert not c.has_truth()
