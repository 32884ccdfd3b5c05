"""Correlation power analysis on first-round S-box Hamming weights.

Two routes compute the same correlations: ``correlation_matrix`` is a
two-pass batch computation, ``CorrelationAccumulator`` a one-pass streaming
update (pairwise merge of per-chunk moments) used for MTD curves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .aes import HW_SBOX_XOR
from .leakage import TraceSet

N_GUESSES = 256


class ZeroVarianceWarning(RuntimeWarning):
    """A hypothesis or sample column had zero variance; its correlation was set to 0."""


def pearson(x, y) -> float:
    """Pearson correlation of two equal-length vectors.

    Returns 0.0 (with a ZeroVarianceWarning) when either input is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson needs two 1-D vectors of equal length >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = np.dot(xc, xc)
    syy = np.dot(yc, yc)
    if sxx == 0 or syy == 0:
        warnings.warn("zero-variance input to pearson", ZeroVarianceWarning, stacklevel=2)
        return 0.0
    return float(np.clip(np.dot(xc, yc) / np.sqrt(sxx * syy), -1.0, 1.0))


def hypothesis_matrix(plaintexts: np.ndarray, byte_index: int) -> np.ndarray:
    """256 x n matrix; entry (g, i) = hw(sbox(plaintexts[i, byte_index] ^ g))."""
    if not 0 <= byte_index < 16:
        raise ValueError("byte_index must be in 0..15")
    pts = np.asarray(plaintexts, dtype=np.uint8)
    return HW_SBOX_XOR[pts[:, byte_index]].T


def _normalise(cov, var_h, var_t):
    den = np.sqrt(np.outer(var_h, var_t))
    degenerate = den == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(degenerate, 0.0, cov / np.where(degenerate, 1.0, den))
    if degenerate.any():
        warnings.warn(f"{int(degenerate.sum())} zero-variance correlation cells set to 0",
                      ZeroVarianceWarning, stacklevel=3)
    return np.clip(rho, -1.0, 1.0), degenerate


def correlation_matrix(samples: np.ndarray, hyp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch (two-pass) correlation of every hypothesis row with every sample column.

    Returns ``(rho, degenerate)``, both shaped (n_hyp, n_samples).
    """
    t = np.asarray(samples, dtype=np.float64)
    h = np.asarray(hyp, dtype=np.float64)
    if t.shape[0] != h.shape[1] or t.shape[0] < 2:
        raise ValueError("need at least two traces and matching trace counts")
    tc = t - t.mean(axis=0)
    hc = h - h.mean(axis=1, keepdims=True)
    return _normalise(hc @ tc, np.einsum("ij,ij->i", hc, hc), np.einsum("ij,ij->j", tc, tc))


class CorrelationAccumulator:
    """Streaming Pearson statistics for (n_hyp x n_samples) correlation grids.

    Keeps the count, means, centred second moments and the centred cross
    moment. Chunks are folded in with the pairwise update, so merging
    accumulators built on disjoint trace ranges is order-independent up to
    rounding. Sample means are held relative to a per-column offset taken
    from the first chunk, so a large DC level does not eat the precision of
    the running means.
    """

    def __init__(self, n_hyp: int = N_GUESSES, n_samples: int | None = None):
        self.n = 0
        self.n_hyp = n_hyp
        self.n_samples = n_samples
        self.mean_h = np.zeros(n_hyp)
        self.m2_h = np.zeros(n_hyp)
        self.mean_t = None
        self.m2_t = None
        self.cross = None
        self.offset = None
        if n_samples is not None:
            self._alloc(n_samples)

    def _alloc(self, s: int) -> None:
        self.n_samples = s
        self.mean_t = np.zeros(s)
        self.m2_t = np.zeros(s)
        self.cross = np.zeros((self.n_hyp, s))

    def _fold(self, nb, mh, mt, m2h, m2t, cr):
        if self.mean_t is None:
            self._alloc(mt.size)
        na = self.n
        n = na + nb
        dh = mh - self.mean_h
        dt = mt - self.mean_t
        w = na * nb / n
        self.mean_h += dh * (nb / n)
        self.mean_t += dt * (nb / n)
        self.m2_h += m2h + dh * dh * w
        self.m2_t += m2t + dt * dt * w
        self.cross += cr + np.outer(dh, dt) * w
        self.n = n

    def update(self, samples: np.ndarray, hyp: np.ndarray) -> "CorrelationAccumulator":
        """Fold in a chunk: ``samples`` (k x n_samples), ``hyp`` (n_hyp x k)."""
        t = np.asarray(samples, dtype=np.float64)
        h = np.asarray(hyp, dtype=np.float64)
        if t.ndim == 1:
            t = t[None, :]
            h = h.reshape(-1, 1)
        k = t.shape[0]
        if k == 0:
            return self
        if h.shape != (self.n_hyp, k):
            raise ValueError(f"hypothesis chunk must be {self.n_hyp} x {k}, got {h.shape}")
        mt = t.mean(axis=0)
        mh = h.mean(axis=1)
        tc = t - mt
        hc = h - mh[:, None]
        if self.offset is None or self.n == 0:
            self.offset = mt.copy()
        self._fold(k, mh, mt - self.offset, np.einsum("ij,ij->i", hc, hc),
                   np.einsum("ij,ij->j", tc, tc), hc @ tc)
        return self

    def merge(self, other: "CorrelationAccumulator") -> "CorrelationAccumulator":
        if other.n == 0:
            return self
        if self.offset is None or self.n == 0:
            self.offset = other.offset.copy()
        mt = (other.offset - self.offset) + other.mean_t
        self._fold(other.n, other.mean_h, mt, other.m2_h, other.m2_t, other.cross)
        return self

    def correlation(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n < 2:
            raise ValueError("need at least two traces")
        return _normalise(self.cross, self.m2_h, self.m2_t)


@dataclass
class CpaReport:
    byte_index: int
    correlation: np.ndarray  # (256, samples)
    best_sample: np.ndarray  # per guess
    peak: np.ndarray  # per guess, max over samples of |rho|
    ranking: np.ndarray  # guesses sorted by peak, best first
    recovered: int
    tie: bool
    true_key: int | None
    degenerate: np.ndarray

    @property
    def margin(self) -> float:
        """|rho_correct| - max |rho_wrong|, using the recovered byte if the key is unknown."""
        k = self.recovered if self.true_key is None else self.true_key
        wrong = np.delete(self.peak, k)
        return float(self.peak[k] - wrong.max())

    def rank_of(self, guess: int) -> int:
        return int(np.flatnonzero(self.ranking == guess)[0])

    @property
    def success(self) -> bool | None:
        return None if self.true_key is None else self.recovered == self.true_key


def report_from_correlation(rho: np.ndarray, byte_index: int, true_key: int | None = None,
                            degenerate: np.ndarray | None = None) -> CpaReport:
    absr = np.abs(rho)
    best = absr.argmax(axis=1)
    peak = absr[np.arange(absr.shape[0]), best]
    # stable sort on -peak gives the lowest guess first among equal peaks
    ranking = np.argsort(-peak, kind="stable")
    tie = bool(peak.size > 1 and peak[ranking[0]] == peak[ranking[1]])
    return CpaReport(byte_index=byte_index, correlation=rho, best_sample=best, peak=peak,
                     ranking=ranking, recovered=int(ranking[0]), tie=tie, true_key=true_key,
                     degenerate=np.zeros_like(rho, dtype=bool) if degenerate is None else degenerate)


def _true_byte(traces: TraceSet, byte_index: int) -> int | None:
    return None if traces.key is None else int(traces.key[byte_index])


def attack(traces: TraceSet, byte_index: int) -> CpaReport:
    """CPA on one key byte using every trace and every sample."""
    if traces.n_traces < 2:
        raise ValueError("attack needs at least two traces")
    rho, deg = correlation_matrix(traces.samples, hypothesis_matrix(traces.plaintexts, byte_index))
    return report_from_correlation(rho, byte_index, _true_byte(traces, byte_index), deg)


def attack_all(traces: TraceSet) -> list[CpaReport]:
    return [attack(traces, b) for b in range(16)]


@dataclass
class MtdCurve:
    byte_index: int
    checkpoints: np.ndarray
    peaks: np.ndarray  # (n_checkpoints, 256)
    true_key: int
    mtd: int | None
    final: CpaReport
    rule: str = "correct-key peak strictly above all wrong-key peaks from the checkpoint to the budget"

    @property
    def disclosed(self) -> bool:
        return self.mtd is not None

    @property
    def correct_peaks(self) -> np.ndarray:
        return self.peaks[:, self.true_key]

    @property
    def max_wrong_peaks(self) -> np.ndarray:
        return np.delete(self.peaks, self.true_key, axis=1).max(axis=1)


def disclosure_point(checkpoints: np.ndarray, peaks: np.ndarray, true_key: int) -> int | None:
    """Smallest checkpoint from which the correct key stays strictly on top."""
    ok = peaks[:, true_key] > np.delete(peaks, true_key, axis=1).max(axis=1)
    if not ok.size or not ok[-1]:
        return None
    failing = np.flatnonzero(~ok)
    first = 0 if failing.size == 0 else failing[-1] + 1
    return int(checkpoints[first])


def mtd_analysis(traces: TraceSet, byte_index: int, checkpoint_step: int = 100,
                 budget: int | None = None) -> MtdCurve:
    """Correlation evolution over a growing trace count, updated chunk by chunk."""
    if checkpoint_step < 1:
        raise ValueError("checkpoint_step must be >= 1")
    if traces.key is None:
        raise ValueError("MTD evaluation needs a trace set with the key present")
    n = traces.n_traces if budget is None else min(budget, traces.n_traces)
    if n < 2:
        raise ValueError("need at least two traces")
    hyp = hypothesis_matrix(traces.plaintexts[:n], byte_index)
    acc = CorrelationAccumulator(N_GUESSES, traces.samples_per_trace)
    checkpoints, peaks = [], []
    start = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroVarianceWarning)
        while start < n:
            stop = min(start + checkpoint_step, n)
            acc.update(traces.samples[start:stop], hyp[:, start:stop])
            start = stop
            if acc.n < 2:
                continue
            rho, _ = acc.correlation()
            checkpoints.append(acc.n)
            peaks.append(np.abs(rho).max(axis=1))
    rho, deg = acc.correlation()
    key = _true_byte(traces, byte_index)
    checkpoints = np.array(checkpoints, dtype=np.int64)
    peaks = np.array(peaks)
    return MtdCurve(byte_index=byte_index, checkpoints=checkpoints, peaks=peaks, true_key=key,
                    mtd=disclosure_point(checkpoints, peaks, key),
                    final=report_from_correlation(rho, byte_index, key, deg))
