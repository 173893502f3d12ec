"""Deterministic score families with closed-form ground truth.

* simplex: one winner and ``n - 1`` competitors at a flat gap ``delta``;
* two-level block: ``m - 1`` within-block competitors at gap ``delta`` and
  ``n - m`` across-block competitors at gap ``tau``;
* finite contact: the bounded contact-count row
  ``(0, -log2/log n, -log n, ..., -log n)``.

Rows are the first row of the corresponding Gram matrix (query index 0).
:func:`gram_realize` factors any positive semidefinite score matrix as
``Q = K`` attention scores.  The temperature schedules at the bottom return
plain scalars.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ._rng import stream
from .errors import ConfigError, InputError, RankError
from .row_core import RowMeta, ScoreRow

PSD_RTOL = 1e-8
SYMMETRY_TOL = 1e-10


# -----------------------------------------------------------------------------
# configurations
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplexConfig:
    n: int
    delta: float
    r_sq: float | None = None

    def __post_init__(self):
        if self.r_sq is None:
            object.__setattr__(self, "r_sq", max(float(self.delta), 1.0))
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"simplex needs integer n >= 2, got {self.n}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ConfigError(f"simplex needs a finite gap delta > 0, got {self.delta}")
        if not self.r_sq >= self.delta:
            raise ConfigError(f"simplex Gram is not PSD: r_sq={self.r_sq} < delta={self.delta}")


@dataclass(frozen=True)
class BlockConfig:
    n: int
    m: int
    delta: float
    tau: float
    r_sq: float | None = None

    def __post_init__(self):
        if self.r_sq is None:
            object.__setattr__(self, "r_sq", max(float(self.tau), 1.0))
        n, m = self.n, self.m
        if int(n) != n or int(m) != m or not (2 <= m <= n):
            raise ConfigError(f"block needs integers 2 <= m <= n, got n={n}, m={m}")
        if n % m:
            raise ConfigError(f"block size m={m} does not divide n={n}")
        if not (0 < self.delta < self.tau <= self.r_sq):
            raise ConfigError(
                f"block needs 0 < delta < tau <= r_sq, got delta={self.delta}, "
                f"tau={self.tau}, r_sq={self.r_sq}")


# -----------------------------------------------------------------------------
# rows and Gram matrices
# -----------------------------------------------------------------------------

def simplex_row(cfg: SimplexConfig, **meta) -> ScoreRow:
    scores = np.full(cfg.n, cfg.r_sq - cfg.delta)
    scores[0] = cfg.r_sq
    return ScoreRow(scores, RowMeta(n=cfg.n, **meta))


def simplex_gram(cfg: SimplexConfig) -> np.ndarray:
    n = cfg.n
    return (cfg.r_sq - cfg.delta) * np.ones((n, n)) + cfg.delta * np.eye(n)


def block_row(cfg: BlockConfig, **meta) -> ScoreRow:
    scores = np.full(cfg.n, cfg.r_sq - cfg.tau)
    scores[:cfg.m] = cfg.r_sq - cfg.delta
    scores[0] = cfg.r_sq
    return ScoreRow(scores, RowMeta(n=cfg.n, **meta))


def block_gram(cfg: BlockConfig) -> np.ndarray:
    n, m = cfg.n, cfg.m
    membership = np.kron(np.eye(n // m), np.ones((m, m)))
    return (cfg.delta * np.eye(n) + (cfg.tau - cfg.delta) * membership
            + (cfg.r_sq - cfg.tau) * np.ones((n, n)))


def block_lambda_closed_form(cfg: BlockConfig) -> float:
    return max(math.log(cfg.m) / cfg.delta, math.log(cfg.n) / cfg.tau)


def finite_contact_row(n: int, **meta) -> ScoreRow:
    """Winner at 0, one near competitor at ``log2/log n``, the rest at ``log n``."""
    if int(n) != n or n < 3:
        raise ConfigError(f"finite-contact row needs n >= 3, got {n}")
    log_n = math.log(n)
    scores = np.full(n, -log_n)
    scores[0] = 0.0
    scores[1] = -math.log(2) / log_n
    return ScoreRow(scores, RowMeta(n=n, **meta))


def gram_realize(sigma, d_qk: int) -> np.ndarray:
    """Factor ``sigma = B.T @ B`` with ``B`` of shape ``(d_qk, n)``.

    Uses a symmetric eigendecomposition, clamps eigenvalues that are negative
    within ``PSD_RTOL * ||sigma||`` to zero and pads with zero rows.  Setting
    ``Q = K = d_qk**0.25 * B`` then gives ``Q.T @ K / sqrt(d_qk) == sigma``.

    Raises
    ------
    InputError
        ``sigma`` is not square, not symmetric or clearly indefinite.
    RankError
        the numerical rank of ``sigma`` exceeds ``d_qk``.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InputError(f"Gram matrix must be square, got shape {sigma.shape}")
    if d_qk < 1:
        raise InputError(f"d_qk must be >= 1, got {d_qk}")
    scale = max(1.0, float(np.abs(sigma).max(initial=0.0)))
    if np.abs(sigma - sigma.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise InputError("Gram matrix is not symmetric")
    evals, evecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
    norm = float(np.abs(evals).max(initial=0.0))
    if evals.size and evals[0] < -PSD_RTOL * norm:
        raise InputError(f"Gram matrix is not PSD: smallest eigenvalue {evals[0]:.3e}")
    rank = int(np.sum(evals > PSD_RTOL * norm))
    if rank > d_qk:
        raise RankError(f"numerical rank {rank} exceeds d_qk={d_qk}")
    n = sigma.shape[0]
    k = min(d_qk, n)
    # eigh sorts ascending; keep the k largest
    lam = np.clip(evals[n - k:], 0.0, None)
    factor = np.sqrt(lam)[:, None] * evecs[:, n - k:].T
    out = np.zeros((d_qk, n))
    out[:k] = factor
    return out


def realized_scores(factor: np.ndarray) -> np.ndarray:
    """Score matrix ``Q.T K / sqrt(d_qk)`` with ``Q = K = d_qk**0.25 * factor``."""
    d_qk = factor.shape[0]
    q = d_qk ** 0.25 * factor
    return q.T @ q / math.sqrt(d_qk)


# -----------------------------------------------------------------------------
# families over an n-grid
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplexFamily:
    """Simplex rows with ``delta_n = (log n)**(1 - xi)`` or a fixed ``delta``."""

    xi: float | None = None
    delta: float | None = None
    r_sq: float | None = None

    def __post_init__(self):
        if (self.xi is None) == (self.delta is None):
            raise ConfigError("simplex family needs exactly one of 'xi' or 'delta'")

    def config(self, n: int) -> SimplexConfig:
        delta = self.delta if self.delta is not None else math.log(n) ** (1.0 - self.xi)
        return SimplexConfig(n, delta, self.r_sq)

    def row(self, n: int, **meta) -> ScoreRow:
        return simplex_row(self.config(n), **meta)


@dataclass(frozen=True)
class BlockFamily:
    """Block rows; ``xi`` sets ``delta_n = log m / (log n)**xi`` and
    ``tau_n = tau_factor * log n / (log n)**xi`` (within-block dominant).
    Fixed ``delta`` / ``tau`` may be given instead."""

    m: int
    xi: float | None = None
    tau_factor: float = 2.0
    delta: float | None = None
    tau: float | None = None
    r_sq: float | None = None

    def __post_init__(self):
        if self.xi is None and (self.delta is None or self.tau is None):
            raise ConfigError("block family needs 'xi' or both 'delta' and 'tau'")
        if self.xi is not None and self.tau_factor <= 1:
            raise ConfigError(f"tau_factor must exceed 1, got {self.tau_factor}")

    def config(self, n: int) -> BlockConfig:
        if self.xi is not None:
            scale = math.log(n) ** self.xi
            delta = math.log(self.m) / scale
            tau = self.tau_factor * math.log(n) / scale
        else:
            delta, tau = self.delta, self.tau
        return BlockConfig(n, self.m, delta, tau, self.r_sq)

    def row(self, n: int, **meta) -> ScoreRow:
        return block_row(self.config(n), **meta)


@dataclass(frozen=True)
class FiniteContactFamily:
    def row(self, n: int, **meta) -> ScoreRow:
        return finite_contact_row(n, **meta)


FAMILIES = {
    "simplex": SimplexFamily,
    "block": BlockFamily,
    "finite-contact": FiniteContactFamily,
}

_GENERATION_KEYS = ("layers", "heads", "seqs", "noise", "seed", "cell_id")


def family_from_config(kind: str, params: dict | None = None):
    """Build a family from a CLI config dict; generation keys are ignored."""
    params = {k: v for k, v in (params or {}).items() if k not in _GENERATION_KEYS}
    try:
        cls = FAMILIES[kind]
    except KeyError:
        raise ConfigError(f"unknown family {kind!r}; choose from {sorted(FAMILIES)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for family {kind!r}: {exc}") from None


def generate_rows(family, n_grid, cell_id: str = "synth", layers: int = 1, heads: int = 1,
                  seqs: int = 1, noise: float = 0.0, seed: int = 0) -> Iterator[ScoreRow]:
    """Rows for every (n, layer, head, seq), optionally with Gaussian jitter.

    The jitter for each row is drawn from its own Philox stream keyed by
    ``seed`` so that the output does not depend on generation order.
    """
    if noise < 0:
        raise ConfigError(f"noise must be >= 0, got {noise}")
    idx = 0
    for n in n_grid:
        base = family.row(int(n)).scores
        for layer in range(layers):
            for head in range(heads):
                for s in range(seqs):
                    scores = base
                    if noise > 0:
                        rng = stream(seed, idx)
                        scores = base + noise * rng.standard_normal(base.size)
                    idx += 1
                    yield ScoreRow(scores, RowMeta(cell_id, layer, head, f"s{s}", int(n), 0))


# -----------------------------------------------------------------------------
# temperature schedules
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleSpec:
    kind: str
    n_train: int
    xi: float = 0.0
    d: int = 128

    def __post_init__(self):
        if self.kind not in ("legacy", "yarn", "ntk"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.n_train < 2:
            raise ConfigError(f"n_train must be >= 2, got {self.n_train}")
        if self.kind == "ntk" and (self.d < 4 or self.d % 2):
            raise ConfigError(f"dynamic-NTK head dim must be even and >= 4, got {self.d}")

    def __call__(self, n: int) -> float:
        if self.kind == "legacy":
            return legacy_multiplier(n, self.n_train, self.xi)
        if self.kind == "yarn":
            return yarn_beta(n, self.n_train)
        return dynamic_ntk_scale(n, self.n_train, self.d)


def _check_lengths(n, n_train):
    if n < 1:
        raise ConfigError(f"context length must be >= 1, got {n}")
    if n_train < 2:
        raise ConfigError(f"n_train must be >= 2, got {n_train}")


def legacy_multiplier(n: int, n_train: int, xi: float) -> float:
    """Logit multiplier ``max(1, log n / log n_train) ** xi``."""
    _check_lengths(n, n_train)
    return max(1.0, math.log(n) / math.log(n_train)) ** xi


def yarn_beta(n: int, n_train: int) -> float:
    """Effective inverse temperature ``(1 + 0.1 ln s)**2``, ``s = max(1, n/n_train)``.

    The YaRN factor multiplies both query and key, hence the square.
    """
    _check_lengths(n, n_train)
    s = max(1.0, n / n_train)
    return (1.0 + 0.1 * math.log(s)) ** 2


def dynamic_ntk_scale(n_eval: int, n_train: int, d: int) -> float:
    """RoPE base scaling ``rho**(d/(d-2))`` with ``rho = max(1, n_eval/n_train)``."""
    _check_lengths(n_eval, n_train)
    if d < 4 or d % 2:
        raise ConfigError(f"head dim must be even and >= 4, got {d}")
    rho = max(1.0, n_eval / n_train)
    return rho ** (d / (d - 2))
