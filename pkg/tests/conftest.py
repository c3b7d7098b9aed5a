import sys
import numpy as np
import pytest

from logactive.annotator.prompts import RANDOM, FewShotPool, Shot
from logactive.corpus import ANOMALOUS, NORMAL, Corpus, LogRecord
from logactive.synthetic import make_log_corpus

GOLDEN_TARGET = LogRecord(
    7,
    "- 1131566461 2005.11.09 tn230 Nov 9 12:01:01 tn230/tn230 pbs_mom: Connection refused (111) in open_demux",
    "pbs_mom: Connection refused (111) in open_demux",
)


def golden_pool() -> FewShotPool:
    return FewShotPool([
        Shot("sshd(pam_unix)[4211]: session opened for user root by (uid=0)", NORMAL, RANDOM, 1),
        Shot("kernel: EXT3-fs error (device sda1): ext3_find_entry: reading directory #2 offset 0", ANOMALOUS,
             RANDOM, 2),
    ], capacity=8)


@pytest.fixture
def small_corpus():
    return make_log_corpus(400, 0.4, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def records(messages, labels=None):
    labels = labels or [None] * len(messages)
    return [LogRecord(i, m, m, lab) for i, (m, lab) in enumerate(zip(messages, labels))]


def corpus_of(messages, labels=None, name="c"):
    return Corpus(records(messages, labels), name)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(mod.RESULTS):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
