"""Hamming-weight leakage model turning AES activity into load-current traces.

Each round occupies ``samples_per_round`` samples. Byte ``b`` of a round is
processed at sample ``b * samples_per_round // 16`` inside that round, so with
16 samples per round every S-box evaluation has its own leakage point and with
one sample per round all sixteen add up in a single sample.

The current at a sample is::

    baseline + hw_scale * sum_b (hw(sbox_out[b]) - 4) + N(0, sigma)

Subtracting the mean weight of 4 keeps ``baseline`` equal to the average
draw. The Gaussian term stands for switching noise of the rest of the core;
it is part of the load current and therefore passes through the regulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import aes

HW_MEAN = 4
SCENARIOS = ("unprotected", "noise_only", "as_aes", "as_aes_plus_noise")


@dataclass(frozen=True)
class LeakageParams:
    baseline_current: float = 18.89e-3
    hw_scale: float = 0.25e-3
    round_period: float = 160e-9
    samples_per_round: int = 16
    # calibrated so the unprotected correct-key correlation is about 0.9
    measurement_noise_sigma: float = 0.17e-3
    pulse_shape: str = "rectangular"
    tau: float = 10e-9

    @property
    def sample_period(self) -> float:
        return self.round_period / self.samples_per_round

    @property
    def samples_per_trace(self) -> int:
        return aes.N_ROUNDS * self.samples_per_round

    def validate(self) -> "LeakageParams":
        for name in ("baseline_current", "hw_scale", "round_period", "measurement_noise_sigma", "tau"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.baseline_current <= 0:
            raise ValueError("baseline_current must be > 0")
        if self.hw_scale < 0 or self.measurement_noise_sigma < 0:
            raise ValueError("hw_scale and measurement_noise_sigma must be >= 0")
        if self.round_period <= 0 or self.tau <= 0:
            raise ValueError("round_period and tau must be > 0")
        if int(self.samples_per_round) != self.samples_per_round or self.samples_per_round < 1:
            raise ValueError("samples_per_round must be an integer >= 1")
        if self.pulse_shape not in ("rectangular", "exponential"):
            raise ValueError(f"unknown pulse_shape {self.pulse_shape!r}")
        return self

    def with_values(self, **kw) -> "LeakageParams":
        return replace(self, **kw)

    def leak_sample(self, byte_index: int, round_index: int = 1) -> int:
        """Sample index where the given round's S-box of ``byte_index`` leaks."""
        return (round_index - 1) * self.samples_per_round + byte_index * self.samples_per_round // 16


@dataclass
class TraceSet:
    plaintexts: np.ndarray
    ciphertexts: np.ndarray
    samples: np.ndarray
    sample_period: float
    key: np.ndarray | None = None
    scenario: str = "unprotected"

    @property
    def n_traces(self) -> int:
        return self.samples.shape[0]

    @property
    def samples_per_trace(self) -> int:
        return self.samples.shape[1]

    def validate(self) -> "TraceSet":
        n = self.n_traces
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-D array")
        if self.plaintexts.shape != (n, 16) or self.ciphertexts.shape != (n, 16):
            raise ValueError("plaintext/ciphertext blocks must be n x 16")
        if self.key is not None and np.asarray(self.key).shape != (16,):
            raise ValueError("key must be 16 bytes")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        return self

    def with_samples(self, samples: np.ndarray, scenario: str | None = None) -> "TraceSet":
        return replace(self, samples=samples, scenario=scenario or self.scenario)

    def head(self, n: int) -> "TraceSet":
        return replace(self, plaintexts=self.plaintexts[:n], ciphertexts=self.ciphertexts[:n],
                       samples=self.samples[:n])


def _activity(params: LeakageParams, sbox_out: np.ndarray) -> np.ndarray:
    """Centered HW activity per sample, shape (n, samples_per_trace)."""
    spr = params.samples_per_round
    hw = aes.HW[sbox_out].astype(np.float64) - HW_MEAN  # (n, rounds, 16)
    pos = np.arange(16) * spr // 16
    act = np.zeros((sbox_out.shape[0], aes.N_ROUNDS, spr))
    for b in range(16):
        act[:, :, pos[b]] += hw[:, :, b]
    act = act.reshape(sbox_out.shape[0], -1)
    if params.pulse_shape == "exponential":
        decay = math.exp(-params.sample_period / params.tau)
        for t in range(1, act.shape[1]):
            act[:, t] += decay * act[:, t - 1]
    return act


def _clean(params: LeakageParams, sbox_out: np.ndarray) -> np.ndarray:
    return params.baseline_current + params.hw_scale * _activity(params, sbox_out)


def trace_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Per-trace seed, independent of how traces are scheduled across workers."""
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def synthesize_trace(key, plaintext, params: LeakageParams, rng_seed) -> np.ndarray:
    """Load-current waveform (amps) for one encryption."""
    params.validate()
    _, act = aes.encrypt(key, plaintext)
    wave = _clean(params, act.sbox_out[None])[0]
    if params.measurement_noise_sigma > 0:
        rng = np.random.default_rng(rng_seed)
        wave = wave + rng.normal(0.0, params.measurement_noise_sigma, wave.size)
    return wave


def synthesize_set(key, n_traces: int, params: LeakageParams, master_seed: int) -> TraceSet:
    """Random-plaintext, fixed-key trace set.

    Row ``i`` equals ``synthesize_trace(key, pt_i, params, trace_seed(master_seed, i))``.
    """
    params.validate()
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")
    key_arr = aes._as_block(key, "key").copy()
    rng = np.random.default_rng(np.random.SeedSequence(master_seed))
    pts = rng.integers(0, 256, size=(n_traces, 16), dtype=np.uint8)
    cts, act = aes.encrypt_batch(key_arr, pts)
    samples = _clean(params, act.sbox_out)
    sigma = params.measurement_noise_sigma
    if sigma > 0:
        S = samples.shape[1]
        for i in range(n_traces):
            samples[i] += np.random.default_rng(trace_seed(master_seed, i)).normal(0.0, sigma, S)
    return TraceSet(plaintexts=pts, ciphertexts=cts, samples=samples,
                    sample_period=params.sample_period, key=key_arr, scenario="unprotected")
