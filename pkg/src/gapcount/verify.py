"""Built-in invariant checks behind ``gapcount verify``.

Each check draws a seeded batch of rows, evaluates one invariant and returns
``(passed, detail)``.  Sizes are kept small enough for the whole suite to run
in a few seconds; the pytest suite runs the same properties at full size.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import kernels
from .estimators import (Cell, bootstrap_halfiqr, bucket_series, decomposition_residual,
                         fit_series, gamma_sweep, subcritical_top_two_bound,
                         supercritical_entropy_bound, supercritical_partition_bound)
from .gap_count import (accumulation_scale, contact_point, contact_triple, laplace_envelope,
                        log_partition, rank_boundary, resolved_scale)
from .row_core import (RowMeta, ScoreRow, counting_function, gap_profile, observables,
                       partition_by_parts, softmax)
from .synth import (BlockConfig, BlockFamily, SimplexConfig, SimplexFamily, block_gram,
                    block_lambda_closed_form, block_row, gram_realize, realized_scores,
                    simplex_gram, simplex_row)


def random_rows(rng: np.random.Generator, count: int, max_n: int = 512,
                ties: bool = False) -> list[ScoreRow]:
    """Random rows mixing continuous scores, coarse (repeated-gap) scores and,
    optionally, ties at the maximum."""
    rows = []
    for _ in range(count):
        n = int(rng.integers(2, max_n + 1))
        scale = 10.0 ** rng.uniform(-2, 2)
        z = rng.standard_normal(n) * scale + rng.uniform(-50, 50)
        kind = rng.random()
        if kind < 0.25:
            z = np.round(z * 4 / scale) * scale / 4
        if ties and kind > 0.8:
            z[int(rng.integers(n))] = z.max()
        if not ties:
            top = np.flatnonzero(z == z.max())
            if top.size > 1:
                z[top[1:]] -= scale
        rows.append(ScoreRow(z))
    return rows


def check_softmax(rng):
    worst = 0.0
    for row in random_rows(rng, 300, ties=True):
        for beta in (0.0, 0.3, 3.0, 300.0):
            sm = softmax(row, beta)
            o = observables(sm)
            ok = (abs(sm.probs.sum() - 1) <= 1e-12 and sm.Z >= 1 and abs(o.p_star - 1 / sm.Z)
                  <= 1e-12 and o.G <= o.p_star + 1e-15 and o.D <= o.G + 1e-15
                  and -1e-15 <= o.H <= math.log(row.n) + 1e-12)
            if not ok:
                return False, f"violated at n={row.n}, beta={beta}"
            worst = max(worst, abs(sm.probs.sum() - 1))
    return True, f"max |sum p - 1| = {worst:.1e}"


def check_entropy_monotone(rng):
    for row in random_rows(rng, 200, ties=True):
        betas = np.sort(rng.uniform(0, 20, 12))
        H = [observables(softmax(row, b)).H for b in betas]
        if any(h2 > h1 + 1e-10 for h1, h2 in zip(H, H[1:])):
            return False, f"entropy increased on a row with n={row.n}"
    return True, "H non-increasing in beta"


def check_partition_by_parts(rng):
    worst = 0.0
    for row in random_rows(rng, 1000, ties=True):
        prof = gap_profile(row)
        for beta in 10.0 ** rng.uniform(-2, 2, 3):
            z = softmax(row, beta).Z
            worst = max(worst, abs(partition_by_parts(prof, beta) - z) / z)
    return worst <= 1e-10, f"max rel err {worst:.1e}"


def check_tie_entropy(rng):
    for row in random_rows(rng, 300, ties=True):
        prof = gap_profile(row)
        for beta in (0.1, 1.0, 10.0, 1e3):
            if observables(softmax(row, beta)).H < math.log(prof.n_max) - 1e-12:
                return False, f"H < log n_max at beta={beta}"
    return True, "H >= log n_max"


def check_shift_invariance(rng):
    for row in random_rows(rng, 200):
        c = rng.uniform(-100, 100)
        a = softmax(row, 1.7)
        b = softmax(ScoreRow(row.scores + c), 1.7)
        if abs(a.Z - b.Z) > 1e-9 * a.Z or np.abs(a.probs - b.probs).max() > 1e-9:
            return False, "shift changed the softmax"
    return True, "softmax unchanged under score shifts"


def check_envelope(rng):
    for row in random_rows(rng, 500):
        prof = gap_profile(row)
        lam = accumulation_scale(prof)
        if np.any(np.log(prof.cum_counts) > lam * prof.gaps * (1 + 1e-10) + 1e-12):
            return False, f"N(u) above exp(Lambda u) at n={row.n}"
    return True, "N(u) <= exp(Lambda u)"


def check_contact_formula(rng):
    worst = 0.0
    for row in random_rows(rng, 1000):
        t = contact_triple(row, eps=0.0)
        worst = max(worst, abs(t.lam * t.delta - t.alpha * math.log(t.n)) / t.C)
    return worst <= 1e-10, f"max rel err {worst:.1e}"


def check_supercritical(rng):
    for row in random_rows(rng, 300):
        prof = gap_profile(row)
        lam = accumulation_scale(prof)
        for s in (1.5, 2.0, 5.0, 20.0):
            sm = softmax(row, s * lam)
            H = observables(sm).H
            if not (1 <= sm.Z <= supercritical_partition_bound(s) + 1e-10):
                return False, f"Z bound violated at s={s}"
            if H > supercritical_entropy_bound(s, sm.Z) + 1e-9:
                return False, f"entropy bound violated at s={s}"
    return True, "1 <= Z <= s/(s-1) and entropy bound"


def check_subcritical(rng):
    fams = [SimplexFamily(xi=x) for x in (0.5, 1.0, 2.0)] + [BlockFamily(m=4, xi=1.0)]
    for fam in fams:
        for n in (2 ** 8, 2 ** 12, 2 ** 16):
            row = fam.row(n)
            lam = accumulation_scale(gap_profile(row))
            for s in (0.01, 0.1, 0.3, 0.5):
                D = observables(softmax(row, s * lam)).D
                if D > subcritical_top_two_bound(s) + 1e-9:
                    return False, f"D={D} above (2/e)s at s={s}, n={n}"
    return True, "D <= (2/e) s"


def check_resolved(rng):
    for row in random_rows(rng, 150):
        prof = gap_profile(row)
        lam = accumulation_scale(prof)
        if resolved_scale(prof, 0.0) != lam:
            return False, "resolved scale at r=0 differs from Lambda"
        rs = np.linspace(0, math.log(row.n), 7)
        vals = [resolved_scale(prof, r) for r in rs]
        if any(b > a for a, b in zip(vals, vals[1:])) or vals[0] > lam:
            return False, "resolved scale not non-increasing in r"
        slack = math.log(1 + math.log(row.n))
        for r in rs:
            if r <= slack or r > math.log(row.n):
                continue
            rb = rank_boundary(prof, r)
            lo, hi = resolved_scale(prof, r), resolved_scale(prof, r - slack)
            if not (lo * (1 - 1e-9) <= rb <= hi * (1 + 1e-9) + 1e-12):
                return False, f"rank boundary {rb} outside [{lo}, {hi}]"
            for frac in (0.2, 0.6, 0.95):
                beta = frac * lo
                if r >= 5 and beta > 0 and log_partition(prof, beta) <= r:
                    return False, "resolved accumulation without rank-gap collapse"
    return True, "ordering and rank-boundary sandwich"


def check_laplace(rng):
    for row in random_rows(rng, 300, ties=True):
        prof = gap_profile(row)
        slack = math.log(1 + math.log(row.n))
        for beta in 10.0 ** rng.uniform(-3, 3, 5):
            S = laplace_envelope(prof, beta)
            F = math.log(softmax(row, beta).Z)
            if not (S <= F + 1e-12 and F <= S + slack + 1e-12):
                return False, f"sandwich violated at beta={beta}"
    return True, "S <= log Z <= S + log(1 + log n)"


def check_synthetic_closed_forms(rng):
    for _ in range(50):
        n = int(rng.integers(2, 400))
        delta = 10.0 ** rng.uniform(-2, 1)
        t = contact_triple(simplex_row(SimplexConfig(n, delta)), eps=0.0)
        if abs(t.lam - math.log(n) / delta) > 1e-12 * t.lam or abs(t.alpha - 1) > 1e-12:
            return False, f"simplex closed form failed at n={n}"
        m = int(rng.choice([d for d in range(2, 13) if 48 % d == 0]))
        delta = 10.0 ** rng.uniform(-2, 0)
        cfg = BlockConfig(48, m, delta, delta * 10.0 ** rng.uniform(0.01, 1.5))
        lam = accumulation_scale(gap_profile(block_row(cfg)))
        if abs(lam - block_lambda_closed_form(cfg)) > 1e-12 * lam:
            return False, f"block closed form failed for {cfg}"
    return True, "simplex and block Lambda match closed forms"


def check_gram(rng):
    worst = 0.0
    mats = [simplex_gram(SimplexConfig(16, 0.7, 2.0)), block_gram(BlockConfig(12, 3, 0.5, 3.0, 4.0))]
    for _ in range(30):
        n = int(rng.integers(2, 65))
        a = rng.standard_normal((n, int(rng.integers(1, n + 1))))
        mats.append(a @ a.T)
    for sigma in mats:
        n = sigma.shape[0]
        worst = max(worst, np.abs(realized_scores(gram_realize(sigma, n)) - sigma).max())
    return worst <= 1e-8, f"max reconstruction err {worst:.1e}"


def _planted_triples(family, grid):
    out = []
    for n in grid:
        row = family.row(n)
        out.append((RowMeta("c", 0, 0, "s", n, 0), contact_triple(row)))
    return out


def check_exponent_recovery(rng):
    grid = [2 ** k for k in range(10, 21, 2)]
    for xi in (0.5, 1.0, 1.5, 2.0):
        fits = fit_series(bucket_series(Cell("c", grid), _planted_triples(SimplexFamily(xi=xi), grid)))
        if abs(fits["lambda"].slope - xi) > 1e-10:
            return False, f"simplex xi={xi} recovered as {fits['lambda'].slope}"
    fits = fit_series(bucket_series(Cell("c", grid), _planted_triples(BlockFamily(m=2, xi=1.5), grid)))
    res = decomposition_residual(fits["lambda"], fits["alpha"], fits["delta"])
    if abs(res) > 1e-10:
        return False, f"decomposition residual {res}"
    return True, "planted exponents recovered, residual 0"


def check_bootstrap_determinism(rng):
    grid = [64, 256, 1024]
    triples = []
    for n in grid:
        for layer in range(3):
            for head in range(2):
                z = SimplexFamily(xi=1.0).row(n).scores + 0.01 * rng.standard_normal(n)
                triples.append((RowMeta("c", layer, head, "s", n, 0), contact_triple(z)))
    cell = Cell("c", grid)
    a = bootstrap_halfiqr(cell, triples, B=50, seed=11, threads=1)
    b = bootstrap_halfiqr(cell, triples, B=50, seed=11, threads=3)
    return a == b, f"half-IQR {a.half_iqr:.3e} (1 vs 3 threads identical: {a == b})"


def check_gamma_monotone(rng):
    rows = random_rows(rng, 200)
    sweep = gamma_sweep(rows)
    med = [r.median_p_star for r in sweep]
    ok = all(b >= a for a, b in zip(med, med[1:]))
    return ok, "median p* non-decreasing in gamma"


def check_kernel_parity(rng):
    nb, npy = kernels.IMPLEMENTATIONS["numba"], kernels.IMPLEMENTATIONS["numpy"]
    for row in random_rows(rng, 200, ties=True):
        a = nb["row_contact"](row.scores, 1e-6, 0.0, 1e-12)
        b = npy["row_contact"](row.scores, 1e-6, 0.0, 1e-12)
        if not all((x == y) or (x != x and y != y) for x, y in zip(a, b)):
            return False, f"numba {a} != numpy {b}"
    return True, f"backends agree (active: {kernels.BACKEND})"


def check_counting(rng):
    for row in random_rows(rng, 200, ties=True):
        prof = gap_profile(row)
        g = row.scores.max() - row.scores
        for t in np.concatenate(([0.0], prof.gaps, rng.uniform(0, g.max() * 1.1, 5))):
            if counting_function(prof, t) != int(np.sum(g <= t)):
                return False, f"N({t}) mismatch"
        if not prof.is_tie:
            d, a = contact_point(prof)
            if not (0 < a <= 1 and d > 0):
                return False, "contact exponent outside (0, 1]"
    return True, "N(t) matches brute-force count"


CHECKS: dict[str, Callable] = {
    "counting-function": check_counting,
    "softmax-invariants": check_softmax,
    "entropy-monotone": check_entropy_monotone,
    "partition-by-parts": check_partition_by_parts,
    "tie-entropy-bound": check_tie_entropy,
    "shift-invariance": check_shift_invariance,
    "envelope": check_envelope,
    "contact-formula": check_contact_formula,
    "supercritical-bounds": check_supercritical,
    "subcritical-bound": check_subcritical,
    "resolved-and-rank-boundary": check_resolved,
    "laplace-sandwich": check_laplace,
    "synthetic-closed-forms": check_synthetic_closed_forms,
    "gram-realizability": check_gram,
    "exponent-recovery": check_exponent_recovery,
    "bootstrap-determinism": check_bootstrap_determinism,
    "gamma-monotone": check_gamma_monotone,
    "kernel-parity": check_kernel_parity,
}


def run_all(seed: int = 0, out=print) -> bool:
    all_ok = True
    for name, check in CHECKS.items():
        rng = np.random.default_rng([seed, len(name)])
        try:
            ok, detail = check(rng)
        except Exception as exc:  # a crash is a failure of that invariant
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name:28s} {detail}")
    return all_ok
