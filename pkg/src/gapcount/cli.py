"""Command-line interface: ``gapcount {analyze,synth,fit,sweep,schedule,verify}``.

Exit codes: 0 success, 1 input/usage error, 2 estimation error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from itertools import islice
from pathlib import Path

from . import __version__, kernels
from .errors import EstimationError, GapCountError
from .estimators import (DEFAULT_B, DEFAULT_GAMMAS, DEFAULT_TIE_THRESHOLD, WEIGHTINGS, Cell,
                         bootstrap_halfiqr, bucket_series, collapse_sweep,
                         decomposition_residual, fit_series, gamma_sweep, is_excluded)
from .gap_count import DEFAULT_EPS, contact_triples
from .io import read_dump, read_triples, write_dump, write_report, write_table, write_triples
from .row_core import DEFAULT_TIE_ABS_TOL
from .synth import ScheduleSpec, family_from_config, generate_rows

log = logging.getLogger("gapcount")

CHUNK = 256


class UsageError(GapCountError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")


def _load_params(text):
    """Inline JSON object or path to a JSON file."""
    if not text:
        return {}
    if os.path.exists(text):
        text = Path(text).read_text()
    try:
        params = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--params is neither a JSON file nor inline JSON: {exc}")
    if not isinstance(params, dict):
        raise UsageError("--params must be a JSON object")
    return params


def _default_threads():
    return os.cpu_count() or 1


def _seed(args):
    env = os.environ.get("GAPCOUNT_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"GAPCOUNT_SEED is not an integer: {env!r}")
    return args.seed


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# -----------------------------------------------------------------------------
# subcommands
# -----------------------------------------------------------------------------

def cmd_analyze(args):
    rows = read_dump(args.inp, lenient=args.lenient)

    def chunks():
        while True:
            block = list(islice(rows, CHUNK))
            if not block:
                return
            yield block

    def work(block):
        return [(r.meta, t) for r, t in zip(block, contact_triples(block, args.eps, args.tie_tol))]

    def records():
        if args.threads > 1:
            # bounded window of in-flight chunks keeps reading streamed and
            # output in input order
            window = deque()
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                for block in chunks():
                    window.append(pool.submit(work, block))
                    if len(window) >= 2 * args.threads:
                        yield from window.popleft().result()
                while window:
                    yield from window.popleft().result()
        else:
            for block in chunks():
                yield from work(block)

    stats = {"rows": 0, "excluded": 0}

    def counted():
        for meta, t in records():
            stats["rows"] += 1
            stats["excluded"] += is_excluded(t, args.tie_threshold)
            yield meta, t

    write_triples(args.out, counted())
    log.info("analyzed %d rows; %d excluded (tie or log10 Lambda > %g)",
             stats["rows"], stats["excluded"], args.tie_threshold)
    return 0


def cmd_synth(args):
    params = _load_params(args.params)
    family = family_from_config(args.family, params)
    gen = {k: params[k] for k in ("layers", "heads", "seqs", "noise", "seed") if k in params}
    rows = generate_rows(family, args.n_grid, cell_id=params.get("cell_id", args.family), **gen)
    n = write_dump(args.out, rows, fmt=args.format, dtype=args.dtype)
    log.info("wrote %d rows", n)
    return 0


def _cell_report(cell, triples, args, seed):
    series = bucket_series(cell, triples, args.tie_threshold, warn=False)
    if series.omitted:
        log.warning("cell %s: no non-tied rows at n=%s; points dropped", cell.id,
                    list(series.omitted))
    fits = fit_series(series, args.weighting)
    boot = {}
    for stat in ("lambda", "alpha", "delta", "tie_pct"):
        boot[stat] = bootstrap_halfiqr(cell, triples, stat, args.bootstrap, seed, args.weighting,
                                       args.tie_threshold, args.threads)
    total = int(series.count.sum() + series.tie_count.sum())

    def xi(coord):
        f = fits[coord]
        return {"estimate": f.slope, "intercept": f.intercept, "stderr": f.stderr,
                "n_points": f.n_points, "half_iqr": boot[coord].half_iqr,
                "B": boot[coord].B, "seed": boot[coord].seed}

    return {
        "cell_id": cell.id,
        "n_grid": list(cell.n_grid),
        "tuple_key": list(cell.tuple_key),
        "n_tuples": len({tuple(getattr(m, k) for k in cell.tuple_key) for m, _ in triples}),
        "rows": total,
        "excluded_rows": int(series.tie_count.sum()),
        "tie_pct": {"value": boot["tie_pct"].point_estimate, "half_iqr": boot["tie_pct"].half_iqr,
                    "B": boot["tie_pct"].B, "seed": boot["tie_pct"].seed},
        "xi_lambda": xi("lambda"),
        "xi_alpha": xi("alpha"),
        "xi_delta": xi("delta"),
        "decomposition_residual": decomposition_residual(fits["lambda"], fits["alpha"],
                                                         fits["delta"]),
        "omitted_n": list(series.omitted),
        "buckets": [
            {"n": int(series.n[i]), "count": int(series.count[i]),
             "tie_count": int(series.tie_count[i]),
             "mean_log_lambda": float(series.mean_log_lambda[i]),
             "mean_log_alpha": float(series.mean_log_alpha[i]),
             "mean_log_delta": float(series.mean_log_delta[i])}
            for i in range(series.n.size)
        ],
    }


def cmd_fit(args):
    seed = _seed(args)
    records = list(read_triples(args.inp))
    by_cell: dict = {}
    for meta, t in records:
        by_cell.setdefault(meta.cell_id, []).append((meta, t))
    wanted = sorted(by_cell) if args.cells in (None, "all") else args.cells.split(",")
    cells = []
    for cid in wanted:
        if cid not in by_cell:
            raise EstimationError(f"cell {cid!r} not present in {args.inp}")
        triples = by_cell[cid]
        grid = args.n_grid or sorted({m.n for m, _ in triples})
        triples = [(m, t) for m, t in triples if m.n in set(grid)]
        cell = Cell(cid, grid, tuple(args.tuple_key.split(",")))
        cells.append(_cell_report(cell, triples, args, seed))
    report = {
        "schema_version": 1,
        "cells": cells,
        "provenance": {
            "tool": "gapcount",
            "version": __version__,
            "input": os.path.basename(str(args.inp)),
            "input_sha256": _digest(args.inp) if args.inp != "-" else None,
            "seed": seed,
            "B": args.bootstrap,
            "weighting": args.weighting,
            "tie_threshold_log10": args.tie_threshold,
            "tuple_key": args.tuple_key.split(","),
            "quantiles": "linear (type 7)",
            "rng": "numpy Philox, key=seed, counter word 3 = draw index",
        },
    }
    write_report(args.out, report)
    return 0


def _sweep_rows(args):
    if args.inp:
        return list(read_dump(args.inp, lenient=args.lenient))
    if not args.family:
        raise UsageError("sweep needs --in DUMP or --family KIND")
    if not args.n_grid:
        raise UsageError("--family sweeps need --n-grid")
    family = family_from_config(args.family, _load_params(args.params))
    return [family.row(n) for n in args.n_grid]


def cmd_sweep(args):
    rows = _sweep_rows(args)
    if args.mode == "gamma":
        grid = args.grid or list(DEFAULT_GAMMAS)
        table = gamma_sweep(rows, grid)
        write_table(args.out, ("gamma", "median_p_star", "frac_p_star_below_inv_log_n", "rows"),
                    [tuple(r) for r in table])
        return 0
    if not args.grid:
        raise UsageError("collapse sweeps need --grid with the s values")
    points = []
    for row in rows:
        points.extend(collapse_sweep(lambda n, r=row: r, args.grid, [row.n]))
    write_table(args.out, ("s", "n", "lambda", "beta", "H", "D", "G", "Z", "p_star"),
                [tuple(p) for p in points])
    return 0


def cmd_schedule(args):
    schedule = ScheduleSpec(args.kind, args.n_train, xi=args.xi, d=args.d)
    print("%.17g" % schedule(args.n))
    return 0


def cmd_verify(args):
    from .verify import run_all
    print(f"gapcount {__version__}, kernel backend: {kernels.BACKEND}")
    return 0 if run_all(seed=args.seed) else 1


# -----------------------------------------------------------------------------
# parser
# -----------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="gapcount", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gapcount {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="per-row contact triples from a score dump")
    a.add_argument("--in", dest="inp", required=True, help="dump path or '-' for stdin")
    a.add_argument("--out", required=True, help="triples CSV path or '-' for stdout")
    a.add_argument("--eps", type=float, default=DEFAULT_EPS)
    a.add_argument("--tie-threshold", type=float, default=DEFAULT_TIE_THRESHOLD,
                   help="log10 Lambda above which a row counts as tied (reported only)")
    a.add_argument("--tie-tol", type=float, default=DEFAULT_TIE_ABS_TOL,
                   help="absolute gap at or below which a score ties the maximum")
    a.add_argument("--threads", type=int, default=_default_threads())
    a.add_argument("--lenient", action="store_true", help="skip malformed records")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", help="write a synthetic score dump")
    s.add_argument("--family", required=True, choices=("simplex", "block", "finite-contact"))
    s.add_argument("--params", default="", help="JSON object or JSON file")
    s.add_argument("--n-grid", type=_int_list, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("text", "binary"), default="text")
    s.add_argument("--dtype", choices=("f32", "f64"), default="f64")
    s.set_defaults(func=cmd_synth)

    f = sub.add_parser("fit", help="per-cell exponents with bootstrap half-IQRs")
    f.add_argument("--in", dest="inp", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--cells", default="all", help="'all' or comma-separated cell ids")
    f.add_argument("--n-grid", type=_int_list, default=None)
    f.add_argument("--tuple-key", default="layer,head")
    f.add_argument("--bootstrap", type=int, default=DEFAULT_B)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--weighting", choices=WEIGHTINGS, default="plain")
    f.add_argument("--tie-threshold", type=float, default=DEFAULT_TIE_THRESHOLD)
    f.add_argument("--threads", type=int, default=_default_threads())
    f.set_defaults(func=cmd_fit)

    w = sub.add_parser("sweep", help="gamma or collapse sweep tables")
    w.add_argument("--mode", choices=("gamma", "collapse"), required=True)
    src = w.add_mutually_exclusive_group()
    src.add_argument("--in", dest="inp")
    src.add_argument("--family", choices=("simplex", "block", "finite-contact"))
    w.add_argument("--params", default="")
    w.add_argument("--n-grid", type=_int_list, default=None)
    w.add_argument("--grid", type=_float_list, default=None,
                   help="gamma values (gamma mode) or s values (collapse mode)")
    w.add_argument("--out", required=True)
    w.add_argument("--lenient", action="store_true")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("schedule", help="evaluate a temperature schedule")
    c.add_argument("--kind", choices=("legacy", "yarn", "ntk"), required=True)
    c.add_argument("--n", type=float, required=True)
    c.add_argument("--n-train", type=int, required=True)
    c.add_argument("--xi", type=float, default=0.0)
    c.add_argument("--d", type=int, default=128)
    c.set_defaults(func=cmd_schedule)

    v = sub.add_parser("verify", help="run the built-in invariant checks")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "threads", 1) < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return 2
    except (GapCountError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
