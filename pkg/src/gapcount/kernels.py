"""Hot per-row kernels, in a numba and a pure-numpy flavour.

Every kernel exists twice: ``_<name>_nb`` (``@njit``) and ``_<name>_np``
(vectorised numpy).  The module-level name ``<name>`` is bound to one of them
at import time:

* numba is used when it imports and ``GAPCOUNT_DISABLE_NUMBA`` is unset;
* setting ``GAPCOUNT_DISABLE_NUMBA=1`` forces the numpy path.

Both flavours are always importable through :data:`IMPLEMENTATIONS` so the
test-suite and ``benchmarks/bench_kernels.py`` can compare them directly.

Conventions shared by all kernels
---------------------------------
``gaps`` is the ascending array of distinct positive competitor gaps and
``counts`` the matching cumulative counts ``N(gaps[i])``; ``n_max = N(0)``.
"""
import math
import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def decorator(func):
            return func
        return decorator


def _env_disabled():
    flag = os.environ.get("GAPCOUNT_DISABLE_NUMBA", "").strip().lower()
    return flag in {"1", "true", "yes", "on"}


NUMBA_ENABLED = HAVE_NUMBA and not _env_disabled()
BACKEND = "numba" if NUMBA_ENABLED else "numpy"


# -----------------------------------------------------------------------------
# gap compression: sorted raw gaps -> (distinct gaps, cumulative counts, n_max)
# -----------------------------------------------------------------------------

def _compress_gaps_np(sorted_gaps, tie_tol, merge_tol):
    n_max = int(np.searchsorted(sorted_gaps, tie_tol, side="right"))
    pos = sorted_gaps[n_max:]
    if pos.size == 0:
        return np.empty(0, np.float64), np.empty(0, np.int64), n_max
    # a group closes where the next gap is more than merge_tol away
    ends = np.flatnonzero(np.diff(pos) > merge_tol)
    ends = np.append(ends, pos.size - 1)
    gaps = np.ascontiguousarray(pos[ends], dtype=np.float64)
    counts = (ends + 1 + n_max).astype(np.int64)
    return gaps, counts, n_max


@njit(cache=True, nogil=True)
def _compress_gaps_nb(sorted_gaps, tie_tol, merge_tol):
    n = sorted_gaps.shape[0]
    n_max = 0
    while n_max < n and sorted_gaps[n_max] <= tie_tol:
        n_max += 1
    gaps = np.empty(n - n_max, np.float64)
    counts = np.empty(n - n_max, np.int64)
    k = 0
    for i in range(n_max, n):
        if i == n - 1 or sorted_gaps[i + 1] - sorted_gaps[i] > merge_tol:
            gaps[k] = sorted_gaps[i]
            counts[k] = i + 1
            k += 1
    return gaps[:k].copy(), counts[:k].copy(), n_max


# -----------------------------------------------------------------------------
# envelope scan: Lambda = max log N(u)/u and the largest (1-eps)-contact gap
# -----------------------------------------------------------------------------

def _scan_contact_np(gaps, counts, eps):
    if gaps.shape[0] == 0:
        return math.nan, -1
    ratios = np.log(counts.astype(np.float64)) / gaps
    lam = float(ratios.max())
    hits = np.flatnonzero(ratios >= (1.0 - eps) * lam)
    return lam, int(hits[-1])


@njit(cache=True, nogil=True)
def _scan_contact_nb(gaps, counts, eps):
    k = gaps.shape[0]
    if k == 0:
        return math.nan, -1
    ratios = np.empty(k, np.float64)
    lam = -np.inf
    for i in range(k):
        ratios[i] = math.log(counts[i]) / gaps[i]
        if ratios[i] > lam:
            lam = ratios[i]
    thresh = (1.0 - eps) * lam
    idx = -1
    for i in range(k - 1, -1, -1):
        if ratios[i] >= thresh:
            idx = i
            break
    return lam, idx


# -----------------------------------------------------------------------------
# log partition function from a gap profile
# -----------------------------------------------------------------------------

def _log_partition_np(gaps, counts, n_max, beta):
    if gaps.shape[0] == 0:
        return math.log(n_max)
    incr = np.diff(counts, prepend=n_max).astype(np.float64)
    z = n_max + float(np.sum(incr * np.exp(-beta * gaps)))
    return math.log(z)


@njit(cache=True, nogil=True)
def _log_partition_nb(gaps, counts, n_max, beta):
    z = float(n_max)
    prev = n_max
    for i in range(gaps.shape[0]):
        z += (counts[i] - prev) * math.exp(-beta * gaps[i])
        prev = counts[i]
    return math.log(z)


# -----------------------------------------------------------------------------
# whole-row contact triple
# -----------------------------------------------------------------------------

def _row_contact_np(scores, eps, tie_tol, merge_rel):
    z_star = float(np.max(scores))
    g = np.sort(z_star - scores)
    gaps, counts, n_max = _compress_gaps_np(g, tie_tol, merge_rel * max(1.0, abs(z_star)))
    if n_max >= 2:
        return math.inf, math.nan, n_max, n_max, gaps.shape[0]
    lam, idx = _scan_contact_np(gaps, counts, eps)
    if idx < 0:
        return math.nan, math.nan, 0, n_max, 0
    return lam, float(gaps[idx]), int(counts[idx]), n_max, gaps.shape[0]


# numpy's sort is SIMD-vectorised and beats numba's quicksort several times
# over on long rows, so rows at least this long are sorted by numpy and only
# the scan runs compiled
SORT_CUTOFF = 256


@njit(cache=True, nogil=True)
def _contact_sorted_nb(g, z_star, eps, tie_tol, merge_rel):
    gaps, counts, n_max = _compress_gaps_nb(g, tie_tol, merge_rel * max(1.0, abs(z_star)))
    if n_max >= 2:
        return math.inf, math.nan, n_max, n_max, gaps.shape[0]
    lam, idx = _scan_contact_nb(gaps, counts, eps)
    if idx < 0:
        return math.nan, math.nan, 0, n_max, 0
    return lam, gaps[idx], counts[idx], n_max, gaps.shape[0]


@njit(cache=True, nogil=True)
def _row_contact_jit(scores, eps, tie_tol, merge_rel):
    z_star = scores.max()
    return _contact_sorted_nb(np.sort(z_star - scores), z_star, eps, tie_tol, merge_rel)


def _row_contact_nb(scores, eps, tie_tol, merge_rel):
    if scores.shape[0] >= SORT_CUTOFF:
        z_star = scores.max()
        return _contact_sorted_nb(np.sort(z_star - scores), z_star, eps, tie_tol, merge_rel)
    return _row_contact_jit(scores, eps, tie_tol, merge_rel)


def _rows_contact_np(flat, offsets, eps, tie_tol, merge_rel):
    m = offsets.shape[0] - 1
    lam = np.empty(m)
    delta = np.empty(m)
    cnt = np.empty(m, np.int64)
    nmax = np.empty(m, np.int64)
    for i in range(m):
        r = _row_contact_np(flat[offsets[i]:offsets[i + 1]], eps, tie_tol, merge_rel)
        lam[i], delta[i], cnt[i], nmax[i] = r[0], r[1], r[2], r[3]
    return lam, delta, cnt, nmax


@njit(cache=True, nogil=True)
def _rows_contact_batch_nb(work, offsets, presorted, z_top, eps, tie_tol, merge_rel):
    m = offsets.shape[0] - 1
    lam = np.empty(m)
    delta = np.empty(m)
    cnt = np.empty(m, np.int64)
    nmax = np.empty(m, np.int64)
    for i in range(m):
        row = work[offsets[i]:offsets[i + 1]]
        if presorted[i]:
            r = _contact_sorted_nb(row, z_top[i], eps, tie_tol, merge_rel)
        else:
            r = _row_contact_jit(row, eps, tie_tol, merge_rel)
        lam[i] = r[0]
        delta[i] = r[1]
        cnt[i] = r[2]
        nmax[i] = r[3]
    return lam, delta, cnt, nmax


def _rows_contact_nb(flat, offsets, eps, tie_tol, merge_rel):
    offsets = np.asarray(offsets, dtype=np.int64)
    long_rows = np.flatnonzero(np.diff(offsets) >= SORT_CUTOFF)
    presorted = np.zeros(offsets.shape[0] - 1, np.bool_)
    z_top = np.zeros(offsets.shape[0] - 1)
    work = flat
    if long_rows.size:
        work = np.array(flat, dtype=np.float64)
        for i in long_rows:
            seg = work[offsets[i]:offsets[i + 1]]
            z_top[i] = seg.max()
            seg[:] = np.sort(z_top[i] - seg)
        presorted[long_rows] = True
    return _rows_contact_batch_nb(work, offsets, presorted, z_top, eps, tie_tol, merge_rel)


IMPLEMENTATIONS = {
    "numpy": {
        "compress_gaps": _compress_gaps_np,
        "scan_contact": _scan_contact_np,
        "log_partition": _log_partition_np,
        "row_contact": _row_contact_np,
        "rows_contact": _rows_contact_np,
    },
    "numba": {
        "compress_gaps": _compress_gaps_nb,
        "scan_contact": _scan_contact_nb,
        "log_partition": _log_partition_nb,
        "row_contact": _row_contact_nb,
        "rows_contact": _rows_contact_nb,
    },
}

_active = IMPLEMENTATIONS[BACKEND]
compress_gaps = _active["compress_gaps"]
scan_contact = _active["scan_contact"]
log_partition = _active["log_partition"]
row_contact = _active["row_contact"]
rows_contact = _active["rows_contact"]
