"""Hot numeric kernels for clustering and silhouette scoring.

Every kernel exists twice: a numba ``@njit`` loop and a vectorised numpy
equivalent. The module-level names (``assign_nearest`` etc.) are bound to one
backend at import time according to :func:`logactive._accel.use_numba`.
Both backends break assignment ties toward the lowest centroid index.
"""

import numpy as np
from scipy.spatial.distance import cdist

from ._accel import HAS_NUMBA, njit, use_numba

# numpy paths chunk row blocks so temporaries stay under ~32 MB
_BLOCK_ELEMS = 1 << 22


# --------------------------------------------------------------------------
# numpy backend
# --------------------------------------------------------------------------

def _assign_nearest_np(X, C):
    n, d = X.shape
    k = C.shape[0]
    labels = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=np.float64)
    step = max(1, _BLOCK_ELEMS // max(1, k * d))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        diff = X[lo:hi, None, :] - C[None, :, :]
        dist = np.einsum("bkd,bkd->bk", diff, diff)
        idx = np.argmin(dist, axis=1)  # first minimum -> lowest index
        labels[lo:hi] = idx
        d2[lo:hi] = dist[np.arange(hi - lo), idx]
    return labels, d2


def _centroid_sums_np(X, labels, k):
    sums = np.zeros((k, X.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, X)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts


def _pairwise_dist_np(X):
    return cdist(X, X, metric="euclidean")


def _silhouette_from_sums(sums, labels, counts):
    n = labels.shape[0]
    own = labels
    cnt = counts.astype(np.float64)
    s = np.zeros(n, dtype=np.float64)
    own_cnt = cnt[own]
    ok = own_cnt > 1
    a = np.zeros(n)
    a[ok] = sums[np.arange(n), own][ok] / (own_cnt[ok] - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        means = sums / cnt[None, :]
    means[:, counts == 0] = np.inf
    means[np.arange(n), own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    nz = ok & (denom > 0)
    s[nz] = (b[nz] - a[nz]) / denom[nz]
    return s


def _silhouette_from_dist_np(D, labels, k):
    onehot = np.zeros((labels.shape[0], k), dtype=np.float64)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    sums = D @ onehot
    counts = np.bincount(labels, minlength=k)
    return _silhouette_from_sums(sums, labels, counts)


def _silhouette_direct_np(X, labels, k):
    n = X.shape[0]
    onehot = np.zeros((n, k), dtype=np.float64)
    onehot[np.arange(n), labels] = 1.0
    sums = np.empty((n, k), dtype=np.float64)
    step = max(1, _BLOCK_ELEMS // max(1, n))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        sums[lo:hi] = cdist(X[lo:hi], X) @ onehot
    counts = np.bincount(labels, minlength=k)
    return _silhouette_from_sums(sums, labels, counts)


# --------------------------------------------------------------------------
# numba backend
# --------------------------------------------------------------------------

@njit(cache=True)
def _assign_nearest_nb(X, C):
    n, d = X.shape
    k = C.shape[0]
    labels = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=np.float64)
    for i in range(n):
        best = np.inf
        arg = 0
        for c in range(k):
            acc = 0.0
            for j in range(d):
                t = X[i, j] - C[c, j]
                acc += t * t
            if acc < best:
                best = acc
                arg = c
        labels[i] = arg
        d2[i] = best
    return labels, d2


@njit(cache=True)
def _centroid_sums_nb(X, labels, k):
    n, d = X.shape
    sums = np.zeros((k, d), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        c = labels[i]
        counts[c] += 1
        for j in range(d):
            sums[c, j] += X[i, j]
    return sums, counts


@njit(cache=True)
def _pairwise_dist_nb(X):
    n, d = X.shape
    D = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for m in range(i + 1, n):
            acc = 0.0
            for j in range(d):
                t = X[i, j] - X[m, j]
                acc += t * t
            r = np.sqrt(acc)
            D[i, m] = r
            D[m, i] = r
    return D


@njit(cache=True)
def _silhouette_finish_nb(sums, labels, counts):
    n, k = sums.shape
    s = np.zeros(n, dtype=np.float64)
    for i in range(n):
        own = labels[i]
        if counts[own] <= 1:
            continue
        a = sums[i, own] / (counts[own] - 1.0)
        b = np.inf
        for c in range(k):
            if c == own or counts[c] == 0:
                continue
            v = sums[i, c] / counts[c]
            if v < b:
                b = v
        denom = a if a > b else b
        if denom > 0.0:
            s[i] = (b - a) / denom
    return s


@njit(cache=True)
def _silhouette_from_dist_nb(D, labels, k):
    n = labels.shape[0]
    sums = np.zeros((n, k), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        counts[labels[i]] += 1
        for m in range(n):
            sums[i, labels[m]] += D[i, m]
    return _silhouette_finish_nb(sums, labels, counts)


@njit(cache=True)
def _silhouette_direct_nb(X, labels, k):
    n, d = X.shape
    sums = np.zeros((n, k), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        counts[labels[i]] += 1
        for m in range(i + 1, n):
            acc = 0.0
            for j in range(d):
                t = X[i, j] - X[m, j]
                acc += t * t
            r = np.sqrt(acc)
            sums[i, labels[m]] += r
            sums[m, labels[i]] += r
    return _silhouette_finish_nb(sums, labels, counts)


NUMPY_KERNELS = {
    "assign_nearest": _assign_nearest_np,
    "centroid_sums": _centroid_sums_np,
    "pairwise_dist": _pairwise_dist_np,
    "silhouette_from_dist": _silhouette_from_dist_np,
    "silhouette_direct": _silhouette_direct_np,
}

NUMBA_KERNELS = {
    "assign_nearest": _assign_nearest_nb,
    "centroid_sums": _centroid_sums_nb,
    "pairwise_dist": _pairwise_dist_nb,
    "silhouette_from_dist": _silhouette_from_dist_nb,
    "silhouette_direct": _silhouette_direct_nb,
} if HAS_NUMBA else None

BACKEND = "numba" if use_numba() else "numpy"
_active = NUMBA_KERNELS if BACKEND == "numba" else NUMPY_KERNELS


def assign_nearest(X, C):
    """Nearest-centroid labels and squared distances for each row of ``X``."""
    return _active["assign_nearest"](
        np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(C, dtype=np.float64)
    )


def centroid_sums(X, labels, k):
    return _active["centroid_sums"](
        np.ascontiguousarray(X, dtype=np.float64), np.asarray(labels, dtype=np.int64), int(k)
    )


def pairwise_dist(X):
    return _active["pairwise_dist"](np.ascontiguousarray(X, dtype=np.float64))


def silhouette_samples(X, labels, k, D=None):
    """Per-point silhouette values; uses the precomputed distance matrix when given."""
    labels = np.asarray(labels, dtype=np.int64)
    if D is not None:
        return _active["silhouette_from_dist"](np.ascontiguousarray(D, dtype=np.float64), labels, int(k))
    return _active["silhouette_direct"](np.ascontiguousarray(X, dtype=np.float64), labels, int(k))
