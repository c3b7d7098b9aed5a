"""Two-step few-shot refinement: hard-case swap, then cluster-targeted additions."""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from ..corpus import LogRecord
from ..errors import InputError, UnparseableResponse
from .llm import annotate
from .prompts import (CLUSTER_TARGETED, FS_COT_SR, HARD_CASE, RANDOM, FewShotPool, PromptTemplate, Shot,
                      get_template, render_label_prompt)

logger = logging.getLogger(__name__)

_DIGITS = re.compile(r"\d+")


def message_pattern(message: str) -> str:
    """Coarse template key: digit runs collapsed to a wildcard."""
    return _DIGITS.sub("<*>", message)


def annotate_records(client, template: PromptTemplate, pool: FewShotPool, records: Sequence[LogRecord],
                     max_in_flight: int = 4) -> dict:
    """Label ``records`` with the current pool; returns ``record_id -> label or None``.

    Clients that are not thread-safe (``parallel_safe = False``, e.g. seeded
    mocks) are driven sequentially so results stay reproducible.
    """
    def one(rec):
        try:
            return annotate(client, render_label_prompt(template, pool, rec), rec.id).label
        except UnparseableResponse:
            logger.warning("unparseable annotation for record %d", rec.id)
            return None

    if max_in_flight <= 1 or not getattr(client, "parallel_safe", True):
        labels = [one(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as ex:
            labels = list(ex.map(one, records))
    return {r.id: lab for r, lab in zip(records, labels)}


def refine_shots_step1(pool: FewShotPool, validation: Sequence[LogRecord], client,
                       template: Optional[PromptTemplate] = None, max_in_flight: int = 4) -> FewShotPool:
    """Swap random shots for misclassified validation records.

    Up to ``ceil(capacity / 2)`` random-provenance shots are replaced, taking
    one record per digit-masked message pattern in order of how often that
    pattern was misclassified, then cycling through patterns again.
    """
    if any(r.truth_label is None for r in validation):
        raise InputError("refinement needs a validation set with truth labels")
    template = template or get_template(FS_COT_SR)
    preds = annotate_records(client, template, pool, validation, max_in_flight)
    new = pool.copy()
    new.last_pass = preds
    wrong = [r for r in validation if preds[r.id] != r.truth_label]
    if not wrong:
        return new

    freq = Counter(message_pattern(r.message) for r in wrong)
    first_seen = {}
    by_pattern = {}
    for i, r in enumerate(wrong):
        key = message_pattern(r.message)
        first_seen.setdefault(key, i)
        by_pattern.setdefault(key, []).append(r)
    order = sorted(by_pattern, key=lambda k: (-freq[k], first_seen[k]))
    candidates = []
    depth = 0
    while len(candidates) < len(wrong):
        for key in order:
            if depth < len(by_pattern[key]):
                candidates.append(by_pattern[key][depth])
        depth += 1

    present = {s.message for s in new.shots}
    candidates = [r for r in candidates if r.message not in present]
    slots = [i for i, s in enumerate(new.shots) if s.provenance == RANDOM]
    quota = min(math.ceil(new.capacity / 2), len(slots), len(candidates))
    # overwrite from the tail so the earliest random shots survive
    for slot, rec in zip(slots[::-1][:quota], candidates[:quota]):
        new.shots[slot] = Shot(rec.message, rec.truth_label, HARD_CASE, rec.id)
    logger.info("step 1: %d misclassified, %d shots replaced", len(wrong), quota)
    return new


def refine_shots_step2(pool: FewShotPool, validation: Sequence[LogRecord], assignments, client=None,
                       template: Optional[PromptTemplate] = None, max_in_flight: int = 4) -> FewShotPool:
    """Add one exemplar from each cluster whose error rate is strictly above the mean.

    ``assignments`` maps each validation record to a cluster: either an
    :class:`~logactive.cluster.Assignments` table or a dict
    ``record_id -> (cluster_id, distance)``. Error rates come from the pass
    stored by step 1; without one, ``client`` runs a fresh pass. When the pool
    is full a random-provenance shot is evicted; hard-case shots never are.
    """
    table = _assignment_map(assignments)
    preds = pool.last_pass
    if preds is None:
        if client is None:
            raise InputError("step 2 needs a step-1 pass or a client")
        preds = annotate_records(client, template or get_template(FS_COT_SR), pool, validation, max_in_flight)

    members = {}
    for r in validation:
        if r.id in table:
            members.setdefault(table[r.id][0], []).append(r)
    if not members:
        return pool.copy()
    rates = {c: float(np.mean([preds.get(r.id) != r.truth_label for r in recs])) for c, recs in members.items()}
    mean_rate = float(np.mean(list(rates.values())))
    targets = sorted((c for c, e in rates.items() if e > mean_rate), key=lambda c: (-rates[c], c))

    new = pool.copy()
    present = {s.message for s in new.shots}
    for c in targets:
        rep = min(members[c], key=lambda r: (table[r.id][1], r.id))
        if rep.message in present:
            continue
        if len(new.shots) >= new.capacity:
            randoms = [i for i, s in enumerate(new.shots) if s.provenance == RANDOM]
            if not randoms:
                break
            del new.shots[randoms[-1]]
        new.shots.append(Shot(rep.message, rep.truth_label, CLUSTER_TARGETED, rep.id))
        present.add(rep.message)
    return new


def _assignment_map(assignments) -> dict:
    if isinstance(assignments, dict):
        return {int(k): (int(v[0]), float(v[1])) for k, v in assignments.items()}
    return {int(a.record_id): (int(a.cluster_id), float(a.distance)) for a in assignments}


def validation_accuracy(preds: dict, validation: Sequence[LogRecord]) -> float:
    return float(np.mean([preds.get(r.id) == r.truth_label for r in validation]))
