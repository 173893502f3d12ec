"""Accumulation scale, contact point and the rank-boundary toolkit.

Every quantity here is a finite maximisation over the stored gaps of a
:class:`~gapcount.row_core.GapProfile`; no grid search is involved.  Tied rows
(``n_max >= 2``) carry ``math.inf`` as their accumulation scale and single-token
rows carry ``math.nan`` together with ``degenerate=True``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError
from .row_core import (DEFAULT_TIE_ABS_TOL, GAP_MERGE_REL, GapProfile,
                       ScoreRow, _as_row)

#: default relative slack when locating the contact gap
DEFAULT_EPS = 1e-6


@dataclass(frozen=True)
class ContactTriple:
    lam: float
    delta: float
    alpha: float
    C: float
    is_tie: bool
    n_max: int
    n: int
    degenerate: bool = False

    @property
    def log10_lambda(self) -> float:
        return math.log10(self.lam) if self.lam > 0 else -math.inf


def _check_eps(eps):
    if not (0 <= eps < 1):
        raise DomainError(f"eps must lie in [0, 1), got {eps}")


def accumulation_scale(profile: GapProfile) -> float:
    """``max_u log N(u) / u`` over the positive gaps.

    Returns ``inf`` for a tie at the maximum and ``nan`` for a one-token row.
    """
    if profile.is_tie:
        return math.inf
    lam, _ = kernels.scan_contact(profile.gaps, profile.cum_counts, 0.0)
    return float(lam)


def contact_point(profile: GapProfile, eps: float = DEFAULT_EPS) -> tuple[float, float]:
    """Largest gap within relative slack ``eps`` of the envelope, and its exponent.

    Returns ``(delta, alpha)`` with ``alpha = log N(delta) / log n``.
    ``eps=0`` selects the largest exact maximiser.
    """
    _check_eps(eps)
    if profile.is_tie:
        raise DomainError("contact point undefined: tie at the maximum (infinite scale)")
    _, idx = kernels.scan_contact(profile.gaps, profile.cum_counts, float(eps))
    if idx < 0:
        return math.nan, math.nan
    delta = float(profile.gaps[idx])
    return delta, math.log(int(profile.cum_counts[idx])) / math.log(profile.n)


def contact_triple(row, eps: float = DEFAULT_EPS,
                   tie_abs_tol: float = DEFAULT_TIE_ABS_TOL) -> ContactTriple:
    """Read ``(Lambda, Delta, alpha, C)`` off one row in a single kernel call."""
    _check_eps(eps)
    row = _as_row(row)
    lam, delta, cnt, n_max, _ = kernels.row_contact(
        row.scores, float(eps), float(tie_abs_tol), GAP_MERGE_REL)
    return _triple_from_kernel(lam, delta, cnt, n_max, row.n)


def _triple_from_kernel(lam, delta, cnt, n_max, n) -> ContactTriple:
    n_max = int(n_max)
    if n_max >= 2:
        return ContactTriple(math.inf, math.nan, math.nan, math.nan, True, n_max, n)
    if n == 1:
        return ContactTriple(math.nan, math.nan, math.nan, math.nan, False, 1, 1, True)
    lam = float(lam)
    delta = float(delta)
    return ContactTriple(lam, delta, math.log(int(cnt)) / math.log(n), lam * delta,
                         False, n_max, n)


def contact_triples(rows, eps: float = DEFAULT_EPS,
                    tie_abs_tol: float = DEFAULT_TIE_ABS_TOL) -> list[ContactTriple]:
    """Batched :func:`contact_triple`; one compiled loop over all rows."""
    _check_eps(eps)
    rows = [_as_row(r) for r in rows]
    if not rows:
        return []
    lengths = np.array([r.n for r in rows], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(lengths)))
    flat = np.concatenate([r.scores for r in rows])
    lam, delta, cnt, nmax = kernels.rows_contact(
        flat, offsets, float(eps), float(tie_abs_tol), GAP_MERGE_REL)
    return [_triple_from_kernel(lam[i], delta[i], cnt[i], nmax[i], int(lengths[i]))
            for i in range(len(rows))]


def resolved_scale(profile: GapProfile, r: float) -> float:
    """Accumulation scale after discarding count mass below ``e**r``.

    ``sup over {t > 0 : log N(t) > r}`` of ``(log N(t) - r) / t``, with the
    empty supremum equal to 0.  A tie of multiplicity ``n_max > e**r`` makes the
    supremum infinite.
    """
    if not (r >= 0 and math.isfinite(r)):
        raise DomainError(f"resolution r must be finite and >= 0, got {r}")
    if profile.n_max >= 2 and math.log(profile.n_max) > r:
        return math.inf
    if profile.gaps.size == 0:
        return 0.0
    logc = np.log(profile.cum_counts.astype(np.float64))
    keep = logc > r
    if not keep.any():
        return 0.0
    return float(np.max((logc[keep] - r) / profile.gaps[keep]))


def laplace_envelope(profile: GapProfile, beta: float) -> float:
    """``max over t in {0} U gaps`` of ``log N(t) - beta t``."""
    if not (beta > 0 and math.isfinite(beta)):
        raise DomainError(f"beta must be finite and > 0, got {beta}")
    s0 = math.log(profile.n_max)
    if profile.gaps.size == 0:
        return s0
    vals = np.log(profile.cum_counts.astype(np.float64)) - beta * profile.gaps
    return max(s0, float(vals.max()))


def log_partition(profile: GapProfile, beta: float) -> float:
    """``log Z(beta)`` evaluated from the profile (the rank free energy)."""
    return float(kernels.log_partition(profile.gaps, profile.cum_counts,
                                       profile.n_max, float(beta)))


def rank_boundary(profile: GapProfile, r: float, rtol: float = 1e-10,
                  max_iter: int = 4000) -> float:
    """``sup{beta >= 0 : log Z(beta) >= r}`` by bisection.

    ``log Z`` decreases from ``log n`` at ``beta = 0`` to ``log n_max`` as
    ``beta -> inf``, so the answer is infinite exactly when ``r <= log n_max``.
    """
    log_n = math.log(profile.n)
    if not (r >= 0 and math.isfinite(r)):
        raise DomainError(f"r must be finite and >= 0, got {r}")
    if r > log_n:
        raise DomainError(f"r={r} exceeds log n={log_n}: unattainable since Z(0)=n")
    if r <= math.log(profile.n_max):
        return math.inf
    if r == log_n:
        return 0.0

    def f(beta):
        return log_partition(profile, beta) - r

    lam = accumulation_scale(profile)
    hi = lam + 1.0 if math.isfinite(lam) else 1.0
    while f(hi) >= 0:
        hi *= 2.0
    lo = 0.0
    for _ in range(max_iter):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


__all__ = [
    "ContactTriple", "DEFAULT_EPS", "ScoreRow", "accumulation_scale", "contact_point",
    "contact_triple", "contact_triples", "laplace_envelope", "log_partition",
    "rank_boundary", "resolved_scale",
]
