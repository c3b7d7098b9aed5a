"""Prompt templates for log labeling and root-cause analysis."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from string import Template
from typing import Optional, Sequence

import numpy as np

from ..corpus import ANOMALOUS, LABELS, NORMAL, LogRecord
from ..errors import EmptyPool, InputError

FS = "FS"
FS_COT = "FS+CoT"
COT_FS = "CoT+FS"
FS_COT_SR = "FS+CoT+SR"
RCA = "RCA"
LABEL_STRATEGIES = (FS, FS_COT, COT_FS, FS_COT_SR)

RANDOM = "random"
HARD_CASE = "hard-case"
CLUSTER_TARGETED = "cluster-targeted"

OUTPUT_DIRECTIVE = "Answer exactly: normal or anomalous"
COT_DIRECTIVE = (
    "Reason step by step: identify the process that wrote the message, what event it reports, "
    "and whether that event signals a fault, attack, or resource problem. "
    "Then give your verdict on the final line."
)
SR_DIRECTIVE = (
    "Before giving the verdict, check your reasoning once against the labeled examples "
    "and correct it if it contradicts them."
)
TERSE_REINSTRUCTION = "Reply with one word only: normal or anomalous."

LABEL_SYSTEM = (
    "You label system log messages from a large data center network. "
    "A message is anomalous if it reports a hardware fault, software failure, "
    "security event, or resource exhaustion; otherwise it is normal."
)

RCA_SYSTEM = (
    "You are a cybersecurity analyst specializing in anomaly detection. "
    "Your task is to analyze a given log entry that has been flagged as anomalous. "
    "Identify the top 2-3 most probable root causes and provide concise recommendations "
    "for further investigation. "
    "Keep your response brief and to the point, avoiding unnecessary details. "
    "Limit the response to a maximum of 100 words."
)

RCA_USER = (
    "Analyze the following anomalous log entry: ${log_entry}. Provide:\n"
    "- The possible causes of the anomaly.\n"
    "- Recommendations for further action."
)


@dataclass(frozen=True)
class ChatPrompt:
    system: str
    user: str

    def __str__(self) -> str:
        return f"[system]\n{self.system}\n\n[user]\n{self.user}\n"


@dataclass(frozen=True)
class Shot:
    message: str
    label: str
    provenance: str = RANDOM
    record_id: Optional[int] = None


@dataclass
class FewShotPool:
    shots: list = field(default_factory=list)
    capacity: int = 8
    # record_id -> predicted label from the most recent validation pass
    last_pass: Optional[dict] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.shots) > self.capacity:
            raise InputError(f"{len(self.shots)} shots exceed capacity {self.capacity}")
        for s in self.shots:
            if s.label not in LABELS:
                raise InputError(f"bad shot label {s.label!r}")

    def __len__(self):
        return len(self.shots)

    def provenance_counts(self) -> dict:
        out = {}
        for s in self.shots:
            out[s.provenance] = out.get(s.provenance, 0) + 1
        return out

    def copy(self) -> "FewShotPool":
        return replace(self, shots=list(self.shots))

    def to_json(self) -> list:
        return [{"message": s.message, "label": s.label, "provenance": s.provenance,
                 "record_id": s.record_id} for s in self.shots]

    @classmethod
    def from_json(cls, rows: list, capacity: int = 8) -> "FewShotPool":
        return cls([Shot(r["message"], r["label"], r.get("provenance", RANDOM), r.get("record_id"))
                    for r in rows], capacity)


def initial_pool(validation: Sequence[LogRecord], capacity: int = 8, seed: int = 0) -> FewShotPool:
    """Seeded uniform draw of labeled shots, alternating labels for balance."""
    rng = np.random.default_rng(seed)
    by_label = {lab: [r for r in validation if r.truth_label == lab] for lab in (NORMAL, ANOMALOUS)}
    picks = {lab: [recs[i] for i in rng.permutation(len(recs))] for lab, recs in by_label.items()}
    norm, anom = picks[NORMAL], picks[ANOMALOUS]
    chosen = []
    # interleave labels; if one runs short the other fills the remaining slots
    for i in range(capacity):
        for group in (norm, anom):
            if i < len(group) and len(chosen) < capacity:
                chosen.append(group[i])
    return FewShotPool([Shot(r.message, r.truth_label, RANDOM, r.id) for r in chosen], capacity)


@dataclass(frozen=True)
class PromptTemplate:
    strategy: str
    system_text: str
    user_skeleton: str

    @property
    def placeholders(self) -> set:
        return {m.group("named") or m.group("braced") for m in Template.pattern.finditer(self.user_skeleton)
                if m.group("named") or m.group("braced")}

    def render(self, mapping: dict) -> ChatPrompt:
        missing = self.placeholders - set(mapping)
        if missing:
            raise InputError(f"missing placeholders {sorted(missing)}")
        return ChatPrompt(self.system_text, Template(self.user_skeleton).substitute(mapping))


def _label_skeleton(strategy: str) -> str:
    shots = "Labeled examples:\n\n${shots}"
    parts = ["Classify the final log message as normal or anomalous."]
    if strategy == FS:
        parts += [shots]
    elif strategy == FS_COT:
        parts += [shots, COT_DIRECTIVE]
    elif strategy == COT_FS:
        parts += [COT_DIRECTIVE, shots]
    elif strategy == FS_COT_SR:
        parts += [shots, COT_DIRECTIVE, SR_DIRECTIVE]
    else:
        raise InputError(f"unknown labeling strategy {strategy!r}")
    parts.append(OUTPUT_DIRECTIVE + "\nLog message: ${target}")
    return "\n\n".join(parts)


TEMPLATES = {s: PromptTemplate(s, LABEL_SYSTEM, _label_skeleton(s)) for s in LABEL_STRATEGIES}
TEMPLATES[RCA] = PromptTemplate(RCA, RCA_SYSTEM, RCA_USER)


def get_template(strategy: str) -> PromptTemplate:
    try:
        return TEMPLATES[strategy]
    except KeyError:
        raise InputError(f"unknown prompt strategy {strategy!r}") from None


def format_shots(pool: FewShotPool) -> str:
    return "\n\n".join(
        f"Example {i}:\nLog message: {s.message}\nLabel: {s.label}" for i, s in enumerate(pool.shots, start=1)
    )


def render_label_prompt(template: PromptTemplate, pool: FewShotPool, target) -> ChatPrompt:
    if template.strategy not in LABEL_STRATEGIES:
        raise InputError(f"{template.strategy} is not a labeling strategy")
    if not pool.shots:
        raise EmptyPool(f"{template.strategy} needs at least one few-shot example")
    message = target.message if isinstance(target, LogRecord) else str(target)
    return template.render({"shots": format_shots(pool), "target": message})


def render_rca_prompt(record) -> ChatPrompt:
    entry = record.raw if isinstance(record, LogRecord) else str(record)
    return TEMPLATES[RCA].render({"log_entry": entry})


_TARGET_RE = re.compile(r"^Log message: (.*)$", re.MULTILINE)


def prompt_target(user_text: str) -> str:
    """Recover the target message from a rendered labeling prompt (last ``Log message:`` line)."""
    found = _TARGET_RE.findall(user_text)
    return found[-1] if found else ""


def prompt_shots(user_text: str) -> list:
    """Exemplar messages embedded in a rendered labeling prompt."""
    return _TARGET_RE.findall(user_text)[:-1]
