"""Seeded synthetic data: Gaussian blobs and Thunderbird-style labeled logs.

Used by the tests, the acceptance suite, the benchmark, and ``logactive ingest
--synthetic`` for offline demos.
"""

from __future__ import annotations

import numpy as np

from .corpus import ANOMALOUS, NORMAL, Corpus, LogRecord


def make_blobs(n: int, n_centers: int, dim: int = 16, separation: float = 10.0, spread: float = 1.0,
               seed: int = 0):
    """Points around ``n_centers`` mutually equidistant centers.

    Centers sit at ``separation`` times the first ``n_centers`` basis vectors
    (``dim`` is raised to ``n_centers`` if needed). Returns ``(X, blob_ids)``
    with blob sizes differing by at most one.
    """
    rng = np.random.default_rng(seed)
    dim = max(dim, n_centers)
    centers = np.zeros((n_centers, dim))
    centers[np.arange(n_centers), np.arange(n_centers)] = separation
    blob = np.arange(n) % n_centers
    rng.shuffle(blob)
    X = centers[blob] + rng.normal(0.0, spread, size=(n, dim))
    return X, blob


def make_labeled_blobs(n: int, n_centers: int, anomalous_fraction: float = 0.4, seed: int = 0, **kw):
    """Blobs whose every member shares one label; returns ``(X, blob_ids, labels)``."""
    X, blob = make_blobs(n, n_centers, seed=seed, **kw)
    n_anom = max(1, int(round(n_centers * anomalous_fraction)))
    blob_label = np.array([ANOMALOUS] * n_anom + [NORMAL] * (n_centers - n_anom), dtype=object)
    return X, blob, blob_label[blob]


# --------------------------------------------------------------------------
# synthetic logs
# --------------------------------------------------------------------------

NORMAL_TEMPLATES = (
    "sshd(pam_unix)[{pid}]: session opened for user {user} by (uid=0)",
    "sshd(pam_unix)[{pid}]: session closed for user {user}",
    "sshd[{pid}]: Accepted publickey for {user} from {ip} port {port} ssh2",
    "crond(pam_unix)[{pid}]: session closed for user root",
    "ntpd[{pid}]: synchronized to {ip}, stratum {small}",
    "dhcpd: DHCPREQUEST for {ip} from {mac} via eth{small}",
    "xinetd[{pid}]: START: rsync pid={pid2} from={ip}",
    "kernel: Losing some ticks... checking if CPU frequency changed.",
    "ib_sm.x[{pid}]: [ib_sm_sweep.c:{num}]: No topology change",
)

ANOMALOUS_TEMPLATES = (
    "pbs_mom: Connection refused ({small}) in open_demux, open_demux: cannot connect to {ip}:{port}",
    "kernel: [KERNEL_IB][ib_mad_dispatch][{path}] EVAPI_process_local_mad failed, return code = -{num}",
    "kernel: EXT3-fs error (device {dev}): ext3_find_entry: reading directory #{num} offset 0",
    "sshd[{pid}]: Failed password for invalid user {user} from {ip} port {port} ssh2",
    "kernel: ECC Error: memory controller {small} uncorrectable error detected on node {node}",
    "pbs_mom: task_check, cannot tm_reply to {job} task {small} : Bad file descriptor",
)

_USERS = ("root", "news", "alice", "bob", "admin", "guest", "oracle", "test", "ops", "backup")
_DEVS = ("sda1", "sda3", "sdb1", "md0", "hda2")


def _fill(template: str, rng: np.random.Generator) -> str:
    vals = {
        "pid": int(rng.integers(1000, 32000)),
        "pid2": int(rng.integers(1000, 32000)),
        "user": _USERS[int(rng.integers(len(_USERS)))],
        "ip": "10.{}.{}.{}".format(*rng.integers(0, 255, size=3)),
        "port": int(rng.integers(1024, 65535)),
        "small": int(rng.integers(0, 9)),
        "num": int(rng.integers(100, 99999)),
        "mac": ":".join(f"{x:02x}" for x in rng.integers(0, 255, size=6)),
        "path": "/mnt_projects/sw/ib/{}".format(int(rng.integers(1, 99))),
        "dev": _DEVS[int(rng.integers(len(_DEVS)))],
        "node": "tn{}".format(int(rng.integers(1, 999))),
        "job": "{}.tbird-admin1".format(int(rng.integers(10000, 999999))),
    }
    return template.format(**vals)


def _header(rng, label_col: str, t: int) -> str:
    node = "tn{}".format(int(rng.integers(1, 999)))
    ts = 1131566461 + t
    return f"{label_col} {ts} 2005.11.09 {node} Nov 9 12:01:01 {node}/{node}"


def make_log_corpus(n: int, anomaly_rate: float = 0.4, seed: int = 0, name: str = "synthetic",
                    normal_templates=NORMAL_TEMPLATES, anomalous_templates=ANOMALOUS_TEMPLATES) -> Corpus:
    """Thunderbird-formatted lines with truth labels fixed by template.

    Exactly ``round(n * anomaly_rate)`` records are anomalous. Within each class
    templates are drawn with fixed unequal weights so clusters differ in size.
    """
    rng = np.random.default_rng(seed)
    n_anom = int(round(n * anomaly_rate))
    labels = np.array([ANOMALOUS] * n_anom + [NORMAL] * (n - n_anom), dtype=object)
    rng.shuffle(labels)

    def weights(m):
        w = np.linspace(2.0, 1.0, m)
        return w / w.sum()

    wn, wa = weights(len(normal_templates)), weights(len(anomalous_templates))
    records = []
    for i, lab in enumerate(labels):
        if lab == NORMAL:
            tpl = normal_templates[int(rng.choice(len(normal_templates), p=wn))]
            col = "-"
        else:
            j = int(rng.choice(len(anomalous_templates), p=wa))
            tpl = anomalous_templates[j]
            col = ("PBS_CON", "VAPI", "EXT_FS", "SSH_AUTH", "ECC", "PBS_BFD")[j % 6]
        msg = _fill(tpl, rng)
        raw = f"{_header(rng, col, i)} {msg}"
        records.append(LogRecord(i, raw, msg, lab))
    return Corpus(records, name)


def template_of(message: str) -> int:
    """Index of the generating template (normal first, then anomalous); -1 if unknown."""
    import re

    for idx, tpl in enumerate(NORMAL_TEMPLATES + ANOMALOUS_TEMPLATES):
        pattern = re.escape(tpl)
        pattern = re.sub(r"\\\{[a-z0-9]+\\\}", r".+?", pattern)
        if re.fullmatch(pattern, message):
            return idx
    return -1
