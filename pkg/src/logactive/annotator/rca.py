"""Zero-shot root-cause reports for records the detector flagged."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field

from ..corpus import LogRecord
from .prompts import render_rca_prompt

WORD_LIMIT = 120  # the prompt asks for 100; replies up to this are still accepted

_BULLET = re.compile(r"^\s*(?:[-\u2022\u2013]|\*(?!\*)|\d+[.)](?=\s))\s*")
_MARK_BULLET = re.compile(r"^\s*(?:[-\u2022\u2013]|\*(?!\*))")
_HEADING_STRIP = re.compile(r"^[\s#*_]*(?:\d+[.)]\s*)?|[\s*_:]*$")
_CAUSE_HEAD = re.compile(r"^(?:(?:possible|probable|likely|root)\s+)*causes?\b", re.IGNORECASE)
_REC_HEAD = re.compile(r"^recommend", re.IGNORECASE)


@dataclass
class RcaReport:
    record_id: int
    causes: list = field(default_factory=list)
    recommendations: list = field(default_factory=list)
    word_count: int = 0
    parse_failed: bool = False
    raw: str = ""

    def to_json(self) -> dict:
        return asdict(self)


def _heading_kind(line: str):
    if _MARK_BULLET.match(line):
        return None
    text = _HEADING_STRIP.sub("", line)
    if len(text.split()) > 8:
        return None
    if _CAUSE_HEAD.match(text):
        return "causes"
    if _REC_HEAD.match(text):
        return "recommendations"
    return None


def _clean_bullet(line: str) -> str:
    text = _BULLET.sub("", line, count=1)
    return text.replace("**", "").strip()


def parse_rca_response(record_id: int, text: str) -> RcaReport:
    """Split a reply into cause and recommendation bullets.

    Anything that lacks both headings, has no cause bullets, or runs past
    :data:`WORD_LIMIT` words is returned with ``parse_failed`` set and the raw
    text preserved.
    """
    words = len(text.split())
    report = RcaReport(record_id, word_count=words, raw=text)
    sections = {"causes": [], "recommendations": []}
    current = None
    seen = set()
    for line in text.splitlines():
        if not line.strip():
            continue
        kind = _heading_kind(line)
        if kind:
            current = kind
            seen.add(kind)
            continue
        if current and _BULLET.match(line):
            sections[current].append(_clean_bullet(line))
        elif current and sections[current]:
            # wrapped continuation of the previous bullet
            sections[current][-1] += " " + line.strip().replace("**", "")
    if seen != {"causes", "recommendations"} or not sections["causes"] or words > WORD_LIMIT:
        report.parse_failed = True
        return report
    report.causes = sections["causes"]
    report.recommendations = sections["recommendations"]
    return report


def analyze_anomaly(client, record: LogRecord) -> RcaReport:
    """Request and parse one RCA report.

    Parse problems are flagged on the report; only :class:`RemoteUnavailable`
    from the client propagates.
    """
    text = client.complete(render_rca_prompt(record), "rca")
    return parse_rca_response(record.id, text or "")
