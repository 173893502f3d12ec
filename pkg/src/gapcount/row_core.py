"""Score rows, gap-counting profiles, softmax and collapse observables.

All quantities are computed from competitor gaps ``z* - z_j`` so that
nothing depends on the absolute level of the scores and no exponential of a
raw score is ever formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DomainError, InputError

#: scores whose gap to the maximum is <= this are tied with the maximum
DEFAULT_TIE_ABS_TOL = 0.0
#: distinct gaps closer than ``GAP_MERGE_REL * max(1, |z*|)`` are merged
GAP_MERGE_REL = 1e-12


@dataclass(frozen=True)
class RowMeta:
    cell_id: str = ""
    layer: int = 0
    head: int = 0
    seq_id: str = ""
    n: int = 0
    query_pos: int = 0

    def describe(self) -> str:
        return (f"cell={self.cell_id!r} layer={self.layer} head={self.head} "
                f"seq={self.seq_id!r} n={self.n} query_pos={self.query_pos}")


@dataclass(frozen=True)
class ScoreRow:
    """One attention row: ``n`` finite logits plus provenance metadata.

    Scores are stored as a read-only float64 array whatever the input dtype.
    """

    scores: np.ndarray
    meta: RowMeta = field(default_factory=RowMeta)

    def __post_init__(self):
        arr = np.array(self.scores, dtype=np.float64).ravel()
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)
        meta = self.meta
        if meta.n == 0:
            meta = RowMeta(meta.cell_id, meta.layer, meta.head, meta.seq_id,
                           arr.size, meta.query_pos)
            object.__setattr__(self, "meta", meta)
        if arr.size < 1:
            raise InputError(f"empty score row ({meta.describe()})")
        if arr.size != meta.n:
            raise InputError(f"row has {arr.size} scores but meta.n={meta.n} ({meta.describe()})")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise InputError(f"non-finite score at index {bad} ({meta.describe()})")

    @property
    def n(self) -> int:
        return self.meta.n

    @classmethod
    def from_scores(cls, scores, **meta) -> "ScoreRow":
        return cls(np.asarray(scores), RowMeta(**meta))


@dataclass(frozen=True)
class GapProfile:
    """Discrete carrier of the counting function ``N(t) = #{j : z* - z_j <= t}``.

    ``gaps`` holds the distinct positive gaps in ascending order and
    ``cum_counts[i] = N(gaps[i])``.  Between ``0`` and ``gaps[0]`` the count is
    ``n_max``, the multiplicity of the maximum.
    """

    z_star: float
    gaps: np.ndarray
    cum_counts: np.ndarray
    n_max: int
    n: int

    @property
    def is_tie(self) -> bool:
        return self.n_max >= 2

    @property
    def degenerate(self) -> bool:
        """True when there is no competitor at all (``n == 1``)."""
        return self.n == 1


class SoftmaxResult(NamedTuple):
    probs: np.ndarray
    Z: float
    logZ: float


class Observables(NamedTuple):
    H: float
    D: float
    G: float
    p_star: float
    degenerate: bool = False


def _as_row(row) -> ScoreRow:
    return row if isinstance(row, ScoreRow) else ScoreRow(np.asarray(row))


def gap_profile(row, tie_abs_tol: float = DEFAULT_TIE_ABS_TOL) -> GapProfile:
    """Build the gap-counting profile of a row.

    Accepts a :class:`ScoreRow` or anything array-like (validated on the way).
    """
    row = _as_row(row)
    if tie_abs_tol < 0 or not math.isfinite(tie_abs_tol):
        raise DomainError(f"tie_abs_tol must be finite and >= 0, got {tie_abs_tol}")
    scores = row.scores
    z_star = float(scores.max())
    sorted_gaps = np.sort(z_star - scores)
    gaps, counts, n_max = kernels.compress_gaps(
        sorted_gaps, float(tie_abs_tol), GAP_MERGE_REL * max(1.0, abs(z_star)))
    gaps.setflags(write=False)
    counts.setflags(write=False)
    return GapProfile(z_star, gaps, counts, int(n_max), row.n)


def counting_function(profile: GapProfile, t: float) -> int:
    """``N(t)``, right-continuous; ``N(0) = n_max``."""
    if not t >= 0:
        raise DomainError(f"counting function needs t >= 0, got {t}")
    i = int(np.searchsorted(profile.gaps, t, side="right"))
    return profile.n_max if i == 0 else int(profile.cum_counts[i - 1])


def softmax(row, beta: float) -> SoftmaxResult:
    """Softmax of ``beta * scores`` computed from gaps (max-shifted)."""
    row = _as_row(row)
    if not (beta >= 0 and math.isfinite(beta)):
        raise DomainError(f"beta must be finite and >= 0, got {beta}")
    if beta == 0:
        w = np.ones(row.n)
    else:
        # gaps (or beta * gaps) may overflow to inf; exp(-inf) = 0 is the right weight
        with np.errstate(over="ignore"):
            w = np.exp(-beta * (row.scores.max() - row.scores))
    Z = float(np.sum(w))
    return SoftmaxResult(w / Z, Z, math.log(Z))


def observables(sm: SoftmaxResult) -> Observables:
    """Entropy ``H``, top-two gap ``D``, spread ``G`` and max weight ``p_star``.

    A single-token row has no second entry; ``D`` is reported as 0 with
    ``degenerate=True``.
    """
    p = np.asarray(sm.probs, dtype=np.float64)
    nz = p[p > 0]
    H = float(-np.sum(nz * np.log(nz)))
    H = max(H, 0.0)
    p_star = float(p.max())
    if p.size == 1:
        return Observables(H, 0.0, 0.0, p_star, True)
    top2 = np.partition(p, p.size - 2)[-2:]
    D = float(top2[1] - top2[0])
    G = float(p_star - p.min())
    return Observables(H, D, G, p_star, False)


def partition_by_parts(profile: GapProfile, beta: float) -> float:
    """``beta * integral_0^inf exp(-beta t) N(t) dt`` for the step function N.

    Each constant piece ``[a, b)`` of ``N`` contributes
    ``N * (exp(-beta a) - exp(-beta b))``; the last piece runs to infinity.
    """
    if not (beta > 0 and math.isfinite(beta)):
        raise DomainError(f"beta must be finite and > 0, got {beta}")
    edges = np.concatenate(([0.0], profile.gaps))
    levels = np.concatenate(([profile.n_max], profile.cum_counts)).astype(np.float64)
    left = np.exp(-beta * edges)
    # exp(-beta a) - exp(-beta b) = exp(-beta a) * -expm1(-beta (b - a))
    widths = np.diff(edges)
    finite_pieces = levels[:-1] * left[:-1] * -np.expm1(-beta * widths)
    return float(np.sum(finite_pieces) + levels[-1] * left[-1])
