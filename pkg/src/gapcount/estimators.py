"""Exponent estimation: bucket means, log-log OLS, bootstrap, power fits, sweeps.

Rows are grouped into cells.  Inside a cell every context length ``n`` of the
cell's grid gets a bucket mean of ``log Lambda``, ``log alpha`` and
``log Delta`` over its non-tied rows, and an exponent is the OLS slope of the
bucket means against ``log log n``.  Intervals are half-IQRs of tuple-level
bootstrap replicates.
"""
from __future__ import annotations

import math
import warnings
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from ._rng import stream
from .errors import DomainError, EstimationError
from .gap_count import ContactTriple, accumulation_scale, log_partition
from .row_core import ScoreRow, gap_profile, observables, softmax

#: rows with log10(Lambda) above this are treated as exact ties
DEFAULT_TIE_THRESHOLD = 5.0
DEFAULT_B = 200
DEFAULT_GAMMAS = (0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0)
DEFAULT_XI_GRID = tuple(round(0.05 * k, 10) for k in range(81))
SIX_POINT_GRID = (64, 128, 256, 512, 768, 1024)

COORDS = ("lambda", "alpha", "delta")
WEIGHTINGS = ("plain", "count")


@dataclass(frozen=True)
class Cell:
    id: str
    n_grid: tuple
    tuple_key: tuple = ("layer", "head")

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "tuple_key", tuple(self.tuple_key))
        if len(grid) < 2:
            raise EstimationError(f"cell {self.id!r} needs at least two grid points")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise EstimationError(f"cell {self.id!r} grid is not strictly ascending: {grid}")
        if grid[0] < 2:
            raise EstimationError(f"cell {self.id!r} grid contains n < 2")


@dataclass(frozen=True)
class BucketSeries:
    """Per-grid-point bucket means; points without surviving rows carry NaN."""

    n: np.ndarray
    mean_log_lambda: np.ndarray
    mean_log_alpha: np.ndarray
    mean_log_delta: np.ndarray
    count: np.ndarray
    tie_count: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return self.count > 0

    @property
    def omitted(self) -> tuple:
        return tuple(int(n) for n in self.n[~self.valid])

    def means(self, coord: str) -> np.ndarray:
        return {"lambda": self.mean_log_lambda, "alpha": self.mean_log_alpha,
                "delta": self.mean_log_delta}[coord]


class ExponentFit(NamedTuple):
    slope: float
    intercept: float
    stderr: float
    n_points: int


class BootstrapResult(NamedTuple):
    B: int
    seed: int
    half_iqr: float
    point_estimate: float


class PowerGridFit(NamedTuple):
    xi_star: float
    a1: float
    a2: float
    grid: np.ndarray
    mse: np.ndarray


class GammaSweepRow(NamedTuple):
    gamma: float
    median_p_star: float
    frac_below: float
    n_rows: int


class CollapsePoint(NamedTuple):
    s: float
    n: int
    lam: float
    beta: float
    H: float
    D: float
    G: float
    Z: float
    p_star: float


# -----------------------------------------------------------------------------
# row table: triples reduced to per-(tuple, grid point) sums
# -----------------------------------------------------------------------------

def is_excluded(triple: ContactTriple, tie_threshold: float = DEFAULT_TIE_THRESHOLD) -> bool:
    """Exact ties, degenerate rows and rows with ``log10 Lambda > tie_threshold``."""
    if triple.is_tie or triple.degenerate or not math.isfinite(triple.lam):
        return True
    return triple.log10_lambda > tie_threshold


@dataclass
class _CellTable:
    grid: np.ndarray
    tuples: list
    # shape (n_tuples, n_grid); sums hold deviations from ``ref`` so that a
    # bucket of identical rows has mean exactly ``ref`` under any weights
    sums: dict = field(default_factory=dict)
    ref: dict = field(default_factory=dict)
    counts: np.ndarray = None
    ties: np.ndarray = None


def _tuple_of(meta, key):
    return tuple(getattr(meta, k) for k in key)


def _build_table(cell: Cell, triples, tie_threshold: float) -> _CellTable:
    grid = np.array(cell.n_grid, dtype=np.int64)
    pos = {int(n): i for i, n in enumerate(grid)}
    tuple_ids: dict = {}
    t_idx, n_idx, keep, vals = [], [], [], {c: [] for c in COORDS}
    for meta, tr in triples:
        if meta.n not in pos:
            raise EstimationError(
                f"row with n={meta.n} is not on the grid of cell {cell.id!r}: {cell.n_grid}")
        t_idx.append(tuple_ids.setdefault(_tuple_of(meta, cell.tuple_key), len(tuple_ids)))
        n_idx.append(pos[meta.n])
        ok = not is_excluded(tr, tie_threshold)
        keep.append(ok)
        vals["lambda"].append(math.log(tr.lam) if ok else 0.0)
        vals["alpha"].append(math.log(tr.alpha) if ok else 0.0)
        vals["delta"].append(math.log(tr.delta) if ok else 0.0)
    T, K = len(tuple_ids), grid.size
    flat = np.asarray(t_idx, dtype=np.int64) * K + np.asarray(n_idx, dtype=np.int64)
    keep = np.asarray(keep, dtype=bool)
    table = _CellTable(grid, list(tuple_ids))
    size = T * K
    table.counts = np.bincount(flat[keep], minlength=size).reshape(T, K).astype(np.float64)
    table.ties = np.bincount(flat[~keep], minlength=size).reshape(T, K).astype(np.float64)
    kept_n = np.asarray(n_idx, dtype=np.int64)[keep]
    # first surviving row of each grid point serves as its reference value
    first = np.full(K, -1, dtype=np.int64)
    for i in range(kept_n.size - 1, -1, -1):
        first[kept_n[i]] = i
    for c in COORDS:
        x = np.asarray(vals[c], dtype=np.float64)[keep]
        ref = np.where(first >= 0, x[np.maximum(first, 0)] if x.size else 0.0, 0.0)
        table.ref[c] = ref
        table.sums[c] = np.bincount(flat[keep], weights=x - ref[kept_n],
                                    minlength=size).reshape(T, K)
    return table


def _series_from_weights(table: _CellTable, w: np.ndarray) -> BucketSeries:
    count = w @ table.counts
    ties = w @ table.ties
    with np.errstate(invalid="ignore", divide="ignore"):
        means = {c: np.where(count > 0, table.ref[c] + (w @ table.sums[c])
                             / np.where(count > 0, count, 1), np.nan) for c in COORDS}
    return BucketSeries(table.grid.copy(), means["lambda"], means["alpha"], means["delta"],
                        count.astype(np.int64), ties.astype(np.int64))


# -----------------------------------------------------------------------------
# bucket means and fits
# -----------------------------------------------------------------------------

def bucket_series(cell: Cell, triples, tie_threshold: float = DEFAULT_TIE_THRESHOLD,
                  warn: bool = True) -> BucketSeries:
    """Bucket means over the non-excluded rows of ``cell``.

    ``triples`` is an iterable of ``(RowMeta, ContactTriple)`` pairs whose ``n``
    lie on the cell grid.  Grid points left without rows are reported in
    ``BucketSeries.omitted`` (and warned about) instead of being imputed.
    """
    table = _build_table(cell, triples, tie_threshold)
    series = _series_from_weights(table, np.ones(len(table.tuples)))
    if warn and series.omitted:
        warnings.warn(f"cell {cell.id!r}: no non-tied rows at n={series.omitted}; "
                      "points dropped from the fit", RuntimeWarning, stacklevel=2)
    return series


def ols_loglog(n, y, weights=None) -> ExponentFit:
    """(Weighted) least squares of ``y`` on ``log log n``.

    With exactly two points the fit interpolates and ``stderr`` is 0.
    """
    x = np.log(np.log(np.asarray(n, dtype=np.float64)))
    return _ols(x, np.asarray(y, dtype=np.float64), weights)


def _ols(x, y, weights=None) -> ExponentFit:
    ok = np.isfinite(x) & np.isfinite(y)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64)
    ok &= w > 0
    x, y, w = x[ok], y[ok], w[ok]
    k = x.size
    if k < 2:
        raise EstimationError(f"need at least two points for a slope, got {k}")
    wsum = w.sum()
    xm = np.dot(w, x) / wsum
    ym = np.dot(w, y) / wsum
    dx = x - xm
    sxx = np.dot(w, dx * dx)
    if sxx <= 0:
        raise EstimationError("regressor has zero spread")
    slope = np.dot(w, dx * (y - ym)) / sxx
    intercept = ym - slope * xm
    if k > 2:
        resid = y - intercept - slope * x
        stderr = math.sqrt(max(np.dot(w, resid * resid), 0.0) / (k - 2) / sxx)
    else:
        stderr = 0.0
    return ExponentFit(float(slope), float(intercept), float(stderr), int(k))


def _fit_series(series: BucketSeries, coord: str, weighting: str) -> ExponentFit:
    if weighting not in WEIGHTINGS:
        raise DomainError(f"weighting must be one of {WEIGHTINGS}, got {weighting!r}")
    v = series.valid
    weights = series.count[v] if weighting == "count" else None
    return ols_loglog(series.n[v], series.means(coord)[v], weights)


def fit_series(series: BucketSeries, weighting: str = "plain") -> dict:
    """Exponent fits for all three contact coordinates."""
    return {c: _fit_series(series, c, weighting) for c in COORDS}


def decomposition_residual(fit_lambda: ExponentFit, fit_alpha: ExponentFit,
                           fit_delta: ExponentFit) -> float:
    """``xi_Lambda - (xi_alpha - xi_Delta + 1)``."""
    return fit_lambda.slope - (fit_alpha.slope - fit_delta.slope + 1.0)


def _iqr_half(values) -> float:
    q1, q3 = np.percentile(values, [25.0, 75.0], method="linear")
    return float(0.5 * (q3 - q1))


def _statistic(series: BucketSeries, statistic: str, weighting: str) -> float:
    if statistic == "tie_pct":
        total = series.count.sum() + series.tie_count.sum()
        return 100.0 * float(series.tie_count.sum()) / total if total else math.nan
    try:
        return _fit_series(series, statistic, weighting).slope
    except EstimationError:
        return math.nan


def bootstrap_halfiqr(cell: Cell, triples, statistic: str = "lambda", B: int = DEFAULT_B,
                      seed: int = 0, weighting: str = "plain",
                      tie_threshold: float = DEFAULT_TIE_THRESHOLD,
                      threads: int = 1) -> BootstrapResult:
    """Half-IQR of ``statistic`` over ``B`` tuple-level bootstrap draws.

    Each draw picks ``|T|`` tuples (per ``cell.tuple_key``) uniformly with
    replacement; a tuple drawn ``k`` times contributes its rows ``k`` times.
    ``statistic`` is one of ``lambda``, ``alpha``, ``delta`` (exponent slope)
    or ``tie_pct``.  Draw ``b`` uses its own Philox stream, so the result is
    independent of ``threads``.  Draws that leave fewer than two grid points
    are dropped from the quartiles.
    """
    if statistic not in COORDS + ("tie_pct",):
        raise DomainError(f"unknown statistic {statistic!r}")
    if B < 1:
        raise EstimationError(f"B must be >= 1, got {B}")
    table = _build_table(cell, triples, tie_threshold)
    T = len(table.tuples)
    if T == 0:
        raise EstimationError(f"cell {cell.id!r} has no tuples to resample")
    point = _statistic(_series_from_weights(table, np.ones(T)), statistic, weighting)

    def one_draw(b):
        picks = stream(seed, b).integers(0, T, size=T)
        w = np.bincount(picks, minlength=T).astype(np.float64)
        return _statistic(_series_from_weights(table, w), statistic, weighting)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = np.fromiter(pool.map(one_draw, range(B)), dtype=np.float64, count=B)
    else:
        reps = np.fromiter(map(one_draw, range(B)), dtype=np.float64, count=B)
    reps = reps[np.isfinite(reps)]
    if reps.size == 0:
        raise EstimationError(f"no bootstrap draw of cell {cell.id!r} produced a finite value")
    return BootstrapResult(int(B), int(seed), _iqr_half(reps), float(point))


# -----------------------------------------------------------------------------
# power-family fits of an inverse-temperature vector
# -----------------------------------------------------------------------------

def _beta_at(beta_vec, ns) -> np.ndarray:
    """Look up ``beta_n``; arrays are indexed so that ``beta_vec[n - 1]`` is ``beta_n``."""
    if isinstance(beta_vec, Mapping):
        return np.array([float(beta_vec[int(n)]) for n in ns])
    arr = np.asarray(beta_vec, dtype=np.float64)
    return arr[np.asarray(ns, dtype=np.int64) - 1]


def power_fit_grid(beta_vec, domain: Iterable[int], grid: Sequence[float] = DEFAULT_XI_GRID,
                   bias_free: bool = True) -> PowerGridFit:
    """Grid search of ``beta_n ~ a1 (log n)**xi (+ a2)`` in value space.

    For each grid value the coefficients are the least-squares solution; the
    returned ``mse`` curve holds the per-point mean squared residual.  Ties in
    the curve resolve to the smallest ``xi``.
    """
    ns = np.array(sorted(set(int(n) for n in domain)), dtype=np.int64)
    if ns.size == 0:
        raise EstimationError("power fit needs a non-empty domain")
    y = _beta_at(beta_vec, ns)
    logn = np.log(ns.astype(np.float64))
    grid = np.asarray(grid, dtype=np.float64)
    mse = np.empty(grid.size)
    coefs = np.empty((grid.size, 2))
    for i, xi in enumerate(grid):
        x = logn ** xi
        if bias_free:
            sxx = np.dot(x, x)
            a1 = np.dot(x, y) / sxx if sxx > 0 else 0.0
            a2 = 0.0
        else:
            design = np.column_stack([x, np.ones_like(x)])
            (a1, a2), *_ = np.linalg.lstsq(design, y, rcond=None)
        r = y - a1 * x - a2
        mse[i] = np.dot(r, r) / r.size
        coefs[i] = a1, a2
    best = int(np.argmin(mse))
    return PowerGridFit(float(grid[best]), float(coefs[best, 0]), float(coefs[best, 1]),
                        grid, mse)


def power_fit_ols(beta_vec, points: Iterable[int] = SIX_POINT_GRID) -> ExponentFit:
    """Continuous exponent: OLS slope of ``log beta_n`` on ``log log n``."""
    ns = np.array(sorted(set(int(n) for n in points)), dtype=np.int64)
    y = _beta_at(beta_vec, ns)
    if np.any(y <= 0):
        raise EstimationError("log-log power fit needs positive beta_n")
    return ols_loglog(ns, np.log(y))


def residual_bootstrap_mse(beta_vec, xi: float, domain: Iterable[int], B: int = DEFAULT_B,
                           seed: int = 0) -> BootstrapResult:
    """Residual bootstrap of the bias-free power-fit MSE at a fixed ``xi``.

    ``half_iqr`` is reported relative to the point-estimate MSE, and as 0 when
    the fit is exact up to floating-point roundoff.
    """
    if B < 1:
        raise EstimationError(f"B must be >= 1, got {B}")
    ns = np.array(sorted(set(int(n) for n in domain)), dtype=np.int64)
    if ns.size == 0:
        raise EstimationError("residual bootstrap needs a non-empty domain")
    y = _beta_at(beta_vec, ns)
    x = np.log(ns.astype(np.float64)) ** xi
    sxx = np.dot(x, x)
    if sxx <= 0:
        raise EstimationError("design (log n)**xi vanishes on the domain")
    a1 = np.dot(x, y) / sxx
    resid = y - a1 * x
    mse0 = float(np.dot(resid, resid) / resid.size)
    mses = np.empty(B)
    for b in range(B):
        e = resid[stream(seed, b).integers(0, resid.size, size=resid.size)]
        ystar = a1 * x + e
        r = ystar - (np.dot(x, ystar) / sxx) * x
        mses[b] = np.dot(r, r) / r.size
    half = _iqr_half(mses)
    # residuals at roundoff level mean an exact fit; their ratio would be noise
    floor = (64 * np.finfo(np.float64).eps) ** 2 * float(np.dot(y, y) / y.size)
    rel = half / mse0 if mse0 > floor else 0.0
    return BootstrapResult(int(B), int(seed), float(rel), mse0)


# -----------------------------------------------------------------------------
# sweeps
# -----------------------------------------------------------------------------

def gamma_sweep(rows, gammas: Sequence[float] = DEFAULT_GAMMAS) -> list:
    """Median max-weight ``p* = 1/Z`` at ``beta = gamma * Lambda`` per gamma.

    Tied and single-token rows are skipped.  ``frac_below`` is the fraction of
    rows with ``p* <= 1/log n``.
    """
    profiles = []
    for row in rows:
        prof = gap_profile(row)
        lam = accumulation_scale(prof)
        if math.isfinite(lam):
            profiles.append((prof, lam))
    out = []
    for g in gammas:
        if not (g > 0 and math.isfinite(g)):
            raise DomainError(f"gamma must be finite and > 0, got {g}")
        p = np.array([math.exp(-log_partition(prof, g * lam)) for prof, lam in profiles])
        thresh = np.array([1.0 / math.log(prof.n) for prof, _ in profiles])
        if p.size:
            out.append(GammaSweepRow(float(g), float(np.median(p)),
                                     float(np.mean(p <= thresh)), int(p.size)))
        else:
            out.append(GammaSweepRow(float(g), math.nan, math.nan, 0))
    return out


def collapse_sweep(family: Callable[[int], ScoreRow], s_values: Sequence[float],
                   n_grid: Sequence[int]) -> list:
    """Observables at ``beta = s * Lambda_n`` for every ``(s, n)``."""
    out = []
    for n in n_grid:
        row = family(int(n))
        lam = accumulation_scale(gap_profile(row))
        if not math.isfinite(lam):
            raise DomainError(f"collapse sweep needs finite Lambda; row at n={n} is tied")
        for s in s_values:
            beta = float(s) * lam
            sm = softmax(row, beta)
            obs = observables(sm)
            out.append(CollapsePoint(float(s), int(n), lam, beta, obs.H, obs.D, obs.G,
                                     sm.Z, obs.p_star))
    return out


# closed-form bounds from the two directions of the critical-scale argument

def subcritical_top_two_bound(s: float) -> float:
    """Upper bound ``(2/e) s`` on the top-two gap at ``beta = s Lambda``, ``s <= 1/2``."""
    return 2.0 / math.e * s


def supercritical_partition_bound(s: float) -> float:
    """Upper bound ``s / (s - 1)`` on ``Z`` at ``beta = s Lambda``, ``s > 1``."""
    return s / (s - 1.0)


def supercritical_entropy_bound(s: float, Z: float) -> float:
    """Upper bound ``log Z + (s/(s-1))**2 - 1`` on the entropy, ``s > 1``."""
    return math.log(Z) + (s / (s - 1.0)) ** 2 - 1.0
