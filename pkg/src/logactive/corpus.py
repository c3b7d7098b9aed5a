"""Log records, corpus loading, and labeled train/test splitting."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
import yaml

from .errors import FormatError, InfeasibleSplit, InputError, MalformedLine

logger = logging.getLogger(__name__)

NORMAL = "normal"
ANOMALOUS = "anomalous"
LABELS = (NORMAL, ANOMALOUS)

_LABEL_ALIASES = {
    "normal": NORMAL, "n": NORMAL, "benign": NORMAL, "0": NORMAL, "-": NORMAL,
    "anomalous": ANOMALOUS, "a": ANOMALOUS, "anomaly": ANOMALOUS, "1": ANOMALOUS,
}


def normalize_label(value) -> Optional[str]:
    """Map label spellings (``n``/``a``/``0``/``1``/...) onto the canonical pair."""
    if value is None:
        return None
    key = str(value).strip().lower()
    if key in ("", "none", "null"):
        return None
    try:
        return _LABEL_ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown label {value!r}") from None


def flip_label(label: str) -> str:
    return NORMAL if label == ANOMALOUS else ANOMALOUS


@dataclass(frozen=True)
class LogRecord:
    id: int
    raw: str
    message: str
    truth_label: Optional[str] = None
    fields: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not self.raw:
            raise ValueError("LogRecord.raw must be non-empty")
        if self.truth_label not in (None, NORMAL, ANOMALOUS):
            raise ValueError(f"bad truth_label {self.truth_label!r}")

    def to_json(self) -> dict:
        out = {"id": self.id, "raw": self.raw, "message": self.message, "truth_label": self.truth_label}
        if self.fields:
            out["fields"] = self.fields
        return out

    @classmethod
    def from_json(cls, obj: dict, default_id: int) -> "LogRecord":
        raw = obj.get("raw")
        if raw is None:
            raw = obj.get("message")
        if not raw:
            raise ValueError("record has no raw text")
        message = obj.get("message", raw)
        return cls(
            id=int(obj.get("id", default_id)),
            raw=raw,
            message=message if message is not None else raw,
            truth_label=normalize_label(obj.get("truth_label", obj.get("label"))),
            fields=dict(obj.get("fields") or {}),
        )


class Counts(NamedTuple):
    benign: int
    anomalous: int
    unlabeled: int


@dataclass
class Corpus:
    records: list
    name: str = "corpus"

    @property
    def counts(self) -> Counts:
        b = a = u = 0
        for r in self.records:
            if r.truth_label == NORMAL:
                b += 1
            elif r.truth_label == ANOMALOUS:
                a += 1
            else:
                u += 1
        return Counts(b, a, u)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def messages(self) -> list:
        return [r.message for r in self.records]

    @property
    def ids(self) -> np.ndarray:
        return np.array([r.id for r in self.records], dtype=np.int64)

    def truth(self) -> list:
        return [r.truth_label for r in self.records]

    def has_truth(self) -> bool:
        return all(r.truth_label is not None for r in self.records)

    def head(self, n: int, name: Optional[str] = None) -> "Corpus":
        return Corpus(self.records[:n], name or self.name)

    def by_id(self) -> dict:
        return {r.id: r for r in self.records}


# --------------------------------------------------------------------------
# line parsing
# --------------------------------------------------------------------------

THUNDERBIRD_PATTERN = (
    r"^(?P<label>\S+)\s+(?P<timestamp>\d+)\s+(?P<date>\S+)\s+(?P<node>\S+)\s+"
    r"(?P<month>\w{3})\s+(?P<day>\d{1,2})\s+(?P<time>\S+)\s+(?P<location>\S+)\s+(?P<message>.*)$"
)


@dataclass(frozen=True)
class FormatSpec:
    """Header-stripping rule for one corpus.

    ``pattern`` is a regex with a ``message`` group; ``None`` means the whole
    line is the message. If ``label_group`` names a group, its value is the
    label column: values in ``normal_values`` mean normal, anything else anomalous.
    """

    name: str = "identity"
    pattern: Optional[str] = None
    label_group: Optional[str] = None
    normal_values: tuple = ("-",)

    def compiled(self):
        return re.compile(self.pattern) if self.pattern else None

    @classmethod
    def thunderbird(cls) -> "FormatSpec":
        return cls(name="thunderbird", pattern=THUNDERBIRD_PATTERN, label_group="label")

    @classmethod
    def from_mapping(cls, cfg: dict) -> "FormatSpec":
        preset = cfg.get("preset")
        if preset == "thunderbird":
            base = cls.thunderbird()
        elif preset in (None, "identity"):
            base = cls()
        else:
            raise InputError(f"unknown format preset {preset!r}")
        return cls(
            name=cfg.get("name", base.name),
            pattern=cfg.get("pattern", base.pattern),
            label_group=cfg.get("label_group", base.label_group),
            normal_values=tuple(cfg.get("normal_values", base.normal_values)),
        )


def load_format_spec(path) -> FormatSpec:
    """Read a corpus config file (YAML) declaring header pattern and label column."""
    path = Path(path)
    try:
        cfg = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise InputError(f"cannot read format config {path}: {exc}") from exc
    return FormatSpec.from_mapping(cfg.get("format", cfg))


def parse_log_line(raw: str, format_spec: FormatSpec = FormatSpec(), record_id: int = 0,
                   _regex=None) -> LogRecord:
    raw = raw.rstrip("\r\n")
    if not raw:
        raise MalformedLine(raw, "empty line")
    regex = _regex if _regex is not None else format_spec.compiled()
    if regex is None:
        return LogRecord(record_id, raw, raw)
    m = regex.match(raw)
    if m is None:
        raise MalformedLine(raw)
    groups = m.groupdict()
    message = groups.get("message")
    if message is None:
        raise MalformedLine(raw, "pattern has no message group")
    label = None
    if format_spec.label_group:
        col = groups.get(format_spec.label_group)
        if col is not None:
            label = NORMAL if col in format_spec.normal_values else ANOMALOUS
    extra = {k: v for k, v in groups.items() if k not in ("message", format_spec.label_group) and v is not None}
    return LogRecord(record_id, raw, message, label, extra)


# --------------------------------------------------------------------------
# corpus IO
# --------------------------------------------------------------------------

def load_corpus(path, format: str = "jsonl", format_spec: Optional[FormatSpec] = None,
                name: Optional[str] = None, quarantine_path=None) -> Corpus:
    """Load a corpus file.

    ``jsonl``: one JSON object per line; any unparseable line raises
    :class:`FormatError`. ``labeled-lines``: raw log lines run through
    ``format_spec``; lines that do not match are written to the quarantine
    sidecar (``<path>.quarantine`` by default) instead of aborting.
    Record ids are reassigned densely in file order.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read corpus {path}: {exc}") from exc
    name = name or path.stem
    records = []
    if format == "jsonl":
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = LogRecord.from_json(json.loads(line), len(records))
            except (ValueError, TypeError, AttributeError) as exc:
                raise FormatError(path, line_no, str(exc)) from exc
            records.append(_with_id(rec, len(records)))
    elif format == "labeled-lines":
        spec = format_spec or FormatSpec.thunderbird()
        regex = spec.compiled()
        bad = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(parse_log_line(line, spec, len(records), _regex=regex))
            except MalformedLine as exc:
                bad.append({"line_no": line_no, "raw": line, "reason": exc.reason})
        if bad:
            qpath = Path(quarantine_path) if quarantine_path else path.with_name(path.name + ".quarantine")
            with qpath.open("w", encoding="utf-8") as fh:
                for row in bad:
                    fh.write(json.dumps(row) + "\n")
            logger.warning("quarantined %d malformed lines to %s", len(bad), qpath)
    else:
        raise InputError(f"unknown corpus format {format!r}")
    return Corpus(records, name)


def _with_id(rec: LogRecord, new_id: int) -> LogRecord:
    if rec.id == new_id:
        return rec
    return LogRecord(new_id, rec.raw, rec.message, rec.truth_label, rec.fields)


def save_corpus(corpus: Corpus, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in corpus.records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")


def read_corpus_file(path) -> Corpus:
    """Read a canonical JSONL corpus keeping its stored ids (split outputs are sparse)."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read corpus {path}: {exc}") from exc
    records = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(LogRecord.from_json(json.loads(line), len(records)))
        except (ValueError, TypeError, AttributeError) as exc:
            raise FormatError(path, line_no, str(exc)) from exc
    return Corpus(records, path.stem)


# --------------------------------------------------------------------------
# splitting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Sizes and anomaly rates for the held-out test sets.

    ``train_size=None`` puts every remaining record in the training split.
    """

    test_sizes: Sequence[int] = (5000, 5000)
    test_anomaly_rates: Sequence[float] = (0.218, 0.40)
    train_size: Optional[int] = None
    train_anomaly_rate: Optional[float] = None
    test_names: Sequence[str] = ("test_I", "test_B")


def split_corpus(corpus: Corpus, spec: SplitSpec, seed: int = 0):
    """Draw test sets at exact anomaly rates, leaving the rest for training.

    Test sets are returned in id order; the training split is returned in a
    seeded random order so any prefix of it is itself a uniform sample.
    """
    if len(spec.test_sizes) != len(spec.test_anomaly_rates):
        raise InputError("test_sizes and test_anomaly_rates differ in length")
    rng = np.random.default_rng(seed)
    normals = [r for r in corpus.records if r.truth_label == NORMAL]
    anomalies = [r for r in corpus.records if r.truth_label == ANOMALOUS]
    unlabeled = [r for r in corpus.records if r.truth_label is None]
    normals = [normals[i] for i in rng.permutation(len(normals))]
    anomalies = [anomalies[i] for i in rng.permutation(len(anomalies))]

    wants = []
    for size, rate in zip(spec.test_sizes, spec.test_anomaly_rates):
        if size < 0 or not 0.0 <= rate <= 1.0:
            raise InputError(f"bad test spec size={size} rate={rate}")
        n_anom = int(round(size * rate))
        wants.append((size - n_anom, n_anom))
    need_n = sum(w[0] for w in wants)
    need_a = sum(w[1] for w in wants)
    if spec.train_size is not None and spec.train_anomaly_rate is not None:
        t_anom = int(round(spec.train_size * spec.train_anomaly_rate))
        need_n += spec.train_size - t_anom
        need_a += t_anom
    if need_n > len(normals) or need_a > len(anomalies):
        raise InfeasibleSplit(
            f"need {need_n} normal / {need_a} anomalous records, have {len(normals)} / {len(anomalies)}"
        )

    tests = []
    pn = pa = 0
    names = list(spec.test_names) + [f"test_{i}" for i in range(len(spec.test_names), len(wants))]
    for (wn, wa), tname in zip(wants, names):
        recs = normals[pn:pn + wn] + anomalies[pa:pa + wa]
        pn += wn
        pa += wa
        recs.sort(key=lambda r: r.id)
        tests.append(Corpus(recs, tname))

    rest_n, rest_a = normals[pn:], anomalies[pa:]
    if spec.train_size is not None and spec.train_anomaly_rate is not None:
        t_anom = int(round(spec.train_size * spec.train_anomaly_rate))
        pool = rest_n[:spec.train_size - t_anom] + rest_a[:t_anom]
    else:
        pool = sorted(rest_n + rest_a + unlabeled, key=lambda r: r.id)
        if spec.train_size is not None:
            if spec.train_size > len(pool):
                raise InfeasibleSplit(f"train_size {spec.train_size} exceeds {len(pool)} remaining records")
            pick = np.sort(rng.choice(len(pool), size=spec.train_size, replace=False))
            pool = [pool[i] for i in pick]
    order = rng.permutation(len(pool))
    train = Corpus([pool[i] for i in order], "train")
    return train, tests


def concat(corpora: Iterable[Corpus], name: str = "corpus") -> Corpus:
    records = []
    for c in corpora:
        records.extend(c.records)
    return Corpus(records, name)
