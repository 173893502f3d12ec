"""Score-dump ingestion and result persistence.

Dump formats
------------
*Text* (``.jsonl``): one JSON object per line with the fields
``schema_version, cell_id, layer, head, seq_id, n, query_pos, dtype, scores``.

*Binary*: the 16-byte magic ``GAPCOUNTDUMPv001`` followed by records.  Each
record is an unsigned 64-bit little-endian header length, the header (the
text record without ``scores``, UTF-8 JSON), an unsigned 64-bit little-endian
payload length and the payload: ``n`` little-endian IEEE-754 values of the
record's ``dtype``.

Both readers stream; nothing but the current record is held in memory.
"""
from __future__ import annotations

import contextlib
import csv
import io
import json
import logging
import math
import struct
import sys
from typing import Iterable, Iterator

import numpy as np

from .errors import InputError
from .gap_count import ContactTriple
from .row_core import RowMeta, ScoreRow

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAGIC = b"GAPCOUNTDUMPv001"
DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_U64 = struct.Struct("<Q")
META_FIELDS = ("cell_id", "layer", "head", "seq_id", "n", "query_pos")
TRIPLE_COLUMNS = ("cell_id", "layer", "head", "seq_id", "n", "query_pos",
                  "lambda", "delta", "alpha", "C", "is_tie", "n_max")


@contextlib.contextmanager
def _open(path, mode):
    if str(path) == "-":
        if "r" in mode:
            yield sys.stdin.buffer if "b" in mode else sys.stdin
        else:
            stream = sys.stdout.buffer if "b" in mode else sys.stdout
            yield stream
            stream.flush()
        return
    kwargs = {} if "b" in mode else {"newline": "", "encoding": "utf-8"}
    with open(path, mode, **kwargs) as fh:
        yield fh


# -----------------------------------------------------------------------------
# records
# -----------------------------------------------------------------------------

def _header(row: ScoreRow, dtype: str) -> dict:
    m = row.meta
    return {"schema_version": SCHEMA_VERSION, "cell_id": m.cell_id, "layer": m.layer,
            "head": m.head, "seq_id": m.seq_id, "n": m.n, "query_pos": m.query_pos,
            "dtype": dtype}


def _meta_from_header(h: dict) -> tuple[RowMeta, str]:
    if not isinstance(h, dict):
        raise ValueError("record is not a JSON object")
    missing = [k for k in META_FIELDS + ("dtype",) if k not in h]
    if missing:
        raise ValueError(f"missing fields {missing}")
    if h.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {h.get('schema_version')}")
    if h["dtype"] not in DTYPES:
        raise ValueError(f"unknown dtype {h['dtype']!r}")
    meta = RowMeta(str(h["cell_id"]), int(h["layer"]), int(h["head"]), str(h["seq_id"]),
                   int(h["n"]), int(h["query_pos"]))
    if meta.n < 1:
        raise ValueError(f"n must be >= 1, got {meta.n}")
    return meta, h["dtype"]


class _DtypeGuard:
    def __init__(self):
        self.dtype = None

    def check(self, dtype):
        if self.dtype is None:
            self.dtype = dtype
        elif dtype != self.dtype:
            raise ValueError(f"dtype {dtype!r} differs from the file's {self.dtype!r}")


# -----------------------------------------------------------------------------
# reading
# -----------------------------------------------------------------------------

def read_dump(path, lenient: bool = False) -> Iterator[ScoreRow]:
    """Stream rows from a text or binary dump (format sniffed from the first bytes).

    Malformed records raise :class:`InputError` naming the line or byte
    offset; with ``lenient=True`` they are logged and skipped instead.
    """
    with _open(path, "rb") as fh:
        buf = fh if hasattr(fh, "peek") else io.BufferedReader(fh)
        head = buf.peek(len(MAGIC))[:len(MAGIC)]
        if head.startswith(MAGIC[:12]) or (head and head.lstrip()[:1] not in (b"{", b"")):
            if head != MAGIC:
                raise InputError(f"{path}: bad magic {head!r}, expected {MAGIC!r}")
            yield from _read_binary(buf, path, lenient)
        else:
            yield from _read_text(buf, path, lenient)


def _read_text(fh, path, lenient) -> Iterator[ScoreRow]:
    guard = _DtypeGuard()
    for lineno, raw in enumerate(fh, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            meta, dtype = _meta_from_header(rec)
            guard.check(dtype)
            scores = np.asarray(rec["scores"], dtype=np.float64)
            if scores.ndim != 1 or scores.size != meta.n:
                raise ValueError(f"payload length {scores.size} != n={meta.n}")
            scores = scores.astype(DTYPES[dtype])
            row = ScoreRow(scores, meta)
        except (ValueError, KeyError, TypeError) as exc:
            msg = f"{path}: line {lineno}: {exc}"
            if not lenient:
                raise InputError(msg) from None
            log.warning("skipping malformed record: %s", msg)
            continue
        yield row


def _read_exact(fh, size, offset, path, what):
    data = fh.read(size)
    if len(data) != size:
        raise InputError(f"{path}: truncated {what} at byte offset {offset}: "
                         f"expected {size} bytes, got {len(data)}")
    return data


def _read_binary(fh, path, lenient) -> Iterator[ScoreRow]:
    fh.read(len(MAGIC))
    offset = len(MAGIC)
    guard = _DtypeGuard()
    while True:
        start = offset
        prefix = fh.read(_U64.size)
        if not prefix:
            return
        if len(prefix) != _U64.size:
            raise InputError(f"{path}: truncated header length at byte offset {start}")
        (hlen,) = _U64.unpack(prefix)
        offset += _U64.size
        hbytes = _read_exact(fh, hlen, offset, path, "header")
        offset += hlen
        (plen,) = _U64.unpack(_read_exact(fh, _U64.size, offset, path, "payload length"))
        offset += _U64.size
        payload = _read_exact(fh, plen, offset, path, "payload")
        offset += plen
        # framing is intact past this point, so a bad record can be skipped
        try:
            meta, dtype = _meta_from_header(json.loads(hbytes.decode("utf-8")))
            guard.check(dtype)
            dt = DTYPES[dtype]
            if plen != meta.n * dt.itemsize:
                raise ValueError(f"payload of {plen} bytes != n={meta.n} x {dt.itemsize}")
            row = ScoreRow(np.frombuffer(payload, dtype=dt), meta)
        except (ValueError, UnicodeDecodeError) as exc:
            msg = f"{path}: record at byte offset {start}: {exc}"
            if not lenient:
                raise InputError(msg) from None
            log.warning("skipping malformed record: %s", msg)
            continue
        yield row


# -----------------------------------------------------------------------------
# writing
# -----------------------------------------------------------------------------

def write_dump(path, rows: Iterable[ScoreRow], fmt: str = "text", dtype: str = "f64") -> int:
    """Write rows as a text or binary dump; returns the number of records."""
    if dtype not in DTYPES:
        raise InputError(f"unknown dtype {dtype!r}")
    if fmt not in ("text", "binary"):
        raise InputError(f"unknown dump format {fmt!r}")
    dt = DTYPES[dtype]
    count = 0
    with _open(path, "wb") as fh:
        if fmt == "binary":
            fh.write(MAGIC)
        for row in rows:
            rec = _header(row, dtype)
            values = row.scores.astype(dt)
            if fmt == "text":
                rec["scores"] = [float(v) for v in values]
                fh.write(json.dumps(rec).encode("utf-8") + b"\n")
            else:
                hb = json.dumps(rec).encode("utf-8")
                pb = values.tobytes()
                fh.write(_U64.pack(len(hb)) + hb + _U64.pack(len(pb)) + pb)
            count += 1
    return count


def _fmt_float(x: float) -> str:
    return "%.17g" % x


def write_triples(path, records: Iterable[tuple[RowMeta, ContactTriple]]) -> int:
    """CSV of per-row contact triples in input order; returns the row count."""
    count = 0
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIPLE_COLUMNS)
        for meta, t in records:
            w.writerow([meta.cell_id, meta.layer, meta.head, meta.seq_id, meta.n,
                        meta.query_pos, _fmt_float(t.lam), _fmt_float(t.delta),
                        _fmt_float(t.alpha), _fmt_float(t.C),
                        "true" if t.is_tie else "false", t.n_max])
            count += 1
    return count


def read_triples(path) -> Iterator[tuple[RowMeta, ContactTriple]]:
    with _open(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRIPLE_COLUMNS:
            raise InputError(f"{path}: unexpected triples header {header}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                if len(rec) != len(TRIPLE_COLUMNS):
                    raise ValueError(f"expected {len(TRIPLE_COLUMNS)} columns, got {len(rec)}")
                meta = RowMeta(rec[0], int(rec[1]), int(rec[2]), rec[3], int(rec[4]),
                               int(rec[5]))
                if rec[10] not in ("true", "false"):
                    raise ValueError(f"is_tie must be true/false, got {rec[10]!r}")
                lam = float(rec[6])
                t = ContactTriple(lam, float(rec[7]), float(rec[8]), float(rec[9]),
                                  rec[10] == "true", int(rec[11]), meta.n,
                                  meta.n == 1)
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from None
            yield meta, t


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def dumps_report(report: dict) -> str:
    """Deterministic JSON; non-finite floats become ``null``."""
    return json.dumps(_jsonable(report), indent=2) + "\n"


def write_report(path, report: dict) -> None:
    with _open(path, "w") as fh:
        fh.write(dumps_report(report))


def write_table(path, columns: Iterable[str], rows: Iterable[Iterable]) -> None:
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(columns))
        for r in rows:
            w.writerow([_fmt_float(v) if isinstance(v, float) else v for v in r])

