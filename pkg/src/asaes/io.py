"""SCAT binary trace files and CSV report writers.

Trace file layout, all little-endian::

    offset  size  field
    0       4     magic b"SCAT"
    4       2     format version (u16)
    6       4     n_traces (u32)
    10      4     samples_per_trace (u32)
    14      8     sample_period in seconds (f64)
    22      1     scenario tag (u8, index into SCENARIOS)
    23      1     key-present flag (u8, 0 or 1)
    24      16n   plaintexts
    ..      16n   ciphertexts
    ..      16    key (only when the flag is 1)
    ..      4nS   samples, f32 amps, trace-major
"""

from __future__ import annotations

import csv
import os
import struct

import numpy as np

from .leakage import SCENARIOS, TraceSet

MAGIC = b"SCAT"
VERSION = 1
HEADER = struct.Struct("<4sHIIdBB")


class TraceFormatError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


def to_bytes(traces: TraceSet, include_key: bool = True) -> bytes:
    traces.validate()
    key_present = include_key and traces.key is not None
    header = HEADER.pack(MAGIC, VERSION, traces.n_traces, traces.samples_per_trace,
                         float(traces.sample_period), SCENARIOS.index(traces.scenario),
                         int(key_present))
    parts = [header, np.ascontiguousarray(traces.plaintexts, dtype=np.uint8).tobytes(),
             np.ascontiguousarray(traces.ciphertexts, dtype=np.uint8).tobytes()]
    if key_present:
        parts.append(np.asarray(traces.key, dtype=np.uint8).tobytes())
    parts.append(np.ascontiguousarray(traces.samples, dtype="<f4").tobytes())
    return b"".join(parts)


def from_bytes(buf: bytes) -> TraceSet:
    if len(buf) < HEADER.size:
        raise TraceFormatError(f"file is {len(buf)} bytes, shorter than the {HEADER.size}-byte header",
                               len(buf))
    magic, version, n, s, period, tag, key_flag = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise TraceFormatError(f"unsupported format version {version}", 4)
    if tag >= len(SCENARIOS):
        raise TraceFormatError(f"unknown scenario tag {tag}", 22)
    if key_flag not in (0, 1):
        raise TraceFormatError(f"key-present flag must be 0 or 1, got {key_flag}", 23)
    if not (period > 0 and np.isfinite(period)):
        raise TraceFormatError(f"sample period must be positive, got {period}", 14)
    expected = HEADER.size + 32 * n + 16 * key_flag + 4 * n * s
    if len(buf) != expected:
        raise TraceFormatError(f"declared n_traces={n}, samples_per_trace={s} need {expected} bytes, "
                               f"file has {len(buf)}", min(len(buf), expected))
    off = HEADER.size
    pts = np.frombuffer(buf, np.uint8, 16 * n, off).reshape(n, 16).copy()
    off += 16 * n
    cts = np.frombuffer(buf, np.uint8, 16 * n, off).reshape(n, 16).copy()
    off += 16 * n
    key = None
    if key_flag:
        key = np.frombuffer(buf, np.uint8, 16, off).copy()
        off += 16
    samples = np.frombuffer(buf, "<f4", n * s, off).reshape(n, s)
    bad = np.flatnonzero(~np.isfinite(samples.ravel()))
    if bad.size:
        raise TraceFormatError("non-finite sample value", off + 4 * int(bad[0]))
    return TraceSet(plaintexts=pts, ciphertexts=cts, samples=samples.astype(np.float32),
                    sample_period=float(period), key=key, scenario=SCENARIOS[tag])


def write_traces(path, traces: TraceSet, include_key: bool = True) -> None:
    data = to_bytes(traces, include_key)
    with open(path, "wb") as fh:
        fh.write(data)


def read_traces(path) -> TraceSet:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header: list[str], rows) -> None:
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_mtd_csv(path, curves) -> None:
    """One row per checkpoint per guess, then one summary row per byte."""
    rows = []
    for c in curves:
        for i, cp in enumerate(c.checkpoints):
            for g in range(c.peaks.shape[1]):
                rows.append(["curve", c.byte_index, int(cp), g, c.peaks[i, g], int(g == c.true_key), ""])
    for c in curves:
        rows.append(["summary", c.byte_index, int(c.checkpoints[-1]), c.true_key,
                     c.correct_peaks[-1], 1, c.mtd if c.disclosed else "not_disclosed"])
    write_csv(path, ["kind", "byte", "traces", "guess", "peak_abs_rho", "correct", "mtd"], rows)


def write_attack_csv(path, reports) -> None:
    rows = []
    for r in reports:
        for g in r.ranking:
            rows.append(["guess", r.byte_index, int(g), r.rank_of(int(g)), r.peak[g], int(r.best_sample[g]), ""])
    for r in reports:
        rows.append(["summary", r.byte_index, r.recovered, 0, r.peak[r.recovered],
                     int(r.best_sample[r.recovered]), r.margin])
    write_csv(path, ["kind", "byte", "guess", "rank", "peak_abs_rho", "best_sample", "margin"], rows)


def write_bode_csv(path, table) -> None:
    write_csv(path, list(table.dtype.names), (tuple(r) for r in table))
