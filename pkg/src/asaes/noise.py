"""Injected noise current: Fibonacci LFSR driving a current-steering DAC.

Also holds the closed-form effect of independent additive noise on a
correlation coefficient, used to size the injected noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

# XOR-form maximal-length taps (Xilinx XAPP052), indexed by register width.
MAXIMAL_TAPS = {
    2: (2, 1), 3: (3, 2), 4: (4, 3), 5: (5, 3), 6: (6, 5), 7: (7, 6), 8: (8, 6, 5, 4),
    9: (9, 5), 10: (10, 7), 11: (11, 9), 12: (12, 6, 4, 1), 13: (13, 4, 3, 1),
    14: (14, 5, 3, 1), 15: (15, 14), 16: (16, 15, 13, 4), 17: (17, 14), 18: (18, 11),
    19: (19, 6, 2, 1), 20: (20, 17), 21: (21, 19), 22: (22, 21), 23: (23, 18),
    24: (24, 23, 22, 17),
}


@dataclass(frozen=True)
class NoiseParams:
    lfsr_width: int = 16
    taps: tuple[int, ...] = (16, 15, 13, 4)
    seed: int = 0xACE1
    dac_bits: int = 8
    full_scale: float = 1e-3
    update_period: float = 10e-9
    # register clocks per DAC update; None means dac_bits (fresh bits every code)
    shifts_per_update: int | None = None

    @property
    def shifts(self) -> int:
        return self.dac_bits if self.shifts_per_update is None else self.shifts_per_update

    @property
    def sigma(self) -> float:
        """RMS deviation of uniformly distributed DAC codes."""
        levels = 2 ** self.dac_bits
        return self.full_scale * math.sqrt((levels * levels - 1) / 12.0) / (levels - 1)

    def validate(self) -> "NoiseParams":
        w = self.lfsr_width
        if w < 2 or w > 63:
            raise ValueError("lfsr_width must be in 2..63")
        if self.seed == 0 or not 0 < self.seed < 2 ** w:
            raise ValueError("seed must be a nonzero integer that fits in the register")
        if not self.taps or any(t < 1 or t > w for t in self.taps):
            raise ValueError(f"taps must lie in 1..{w}")
        if w not in self.taps:
            raise ValueError("taps must include the register width")
        if not 1 <= self.dac_bits <= w:
            raise ValueError("dac_bits must be in 1..lfsr_width")
        if self.full_scale < 0 or not math.isfinite(self.full_scale):
            raise ValueError("full_scale must be finite and >= 0")
        if not self.update_period > 0:
            raise ValueError("update_period must be > 0")
        if self.shifts < 1:
            raise ValueError("shifts_per_update must be >= 1")
        return self

    def with_values(self, **kw) -> "NoiseParams":
        return replace(self, **kw)


def lfsr_stream(params: NoiseParams, n: int) -> np.ndarray:
    """First ``n`` register states, starting with the seed."""
    params.validate()
    if n < 1:
        raise ValueError("n must be >= 1")
    w = params.lfsr_width
    mask = 0
    for t in params.taps:
        mask |= 1 << (t - 1)
    full = (1 << w) - 1
    state = params.seed
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        out[i] = state
        fb = bin(state & mask).count("1") & 1
        state = ((state << 1) | fb) & full
    return out


@lru_cache(maxsize=8)
def _cycle(width: int, taps: tuple[int, ...], seed: int) -> np.ndarray:
    mask = 0
    for t in taps:
        mask |= 1 << (t - 1)
    full = (1 << width) - 1
    states = [seed]
    state = seed
    while True:
        fb = bin(state & mask).count("1") & 1
        state = ((state << 1) | fb) & full
        if state == seed:
            break
        states.append(state)
        if len(states) > full:
            raise RuntimeError(f"width-{width} register with taps {taps} never returned to its seed")
    return np.array(states, dtype=np.uint64)


def lfsr_period(params: NoiseParams) -> int:
    params.validate()
    return int(_cycle(params.lfsr_width, tuple(params.taps), params.seed).size)


def dac_codes(params: NoiseParams, n_updates: int) -> np.ndarray:
    """DAC input codes (top ``dac_bits`` of the register) for successive updates."""
    params.validate()
    cyc = _cycle(params.lfsr_width, tuple(params.taps), params.seed)
    idx = (np.arange(n_updates, dtype=np.int64) * params.shifts) % cyc.size
    return (cyc[idx] >> np.uint64(params.lfsr_width - params.dac_bits)).astype(np.int64)


def noise_waveform(params: NoiseParams, duration: float, dt: float) -> np.ndarray:
    """Injected current sampled every ``dt`` for ``duration`` seconds (zero-order hold)."""
    params.validate()
    if not 0 < dt <= params.update_period * (1 + 1e-12):
        raise ValueError("need 0 < dt <= update_period")
    n = int(round(duration / dt))
    # the small epsilon keeps exact multiples of update_period on the right code
    upd = np.floor(np.arange(n) * dt / params.update_period + 1e-9).astype(np.int64)
    codes = dac_codes(params, int(upd[-1]) + 1 if n else 0)
    return codes[upd] * (params.full_scale / (2 ** params.dac_bits - 1))


def noise_for_traces(params: NoiseParams, n_traces: int, samples_per_trace: int,
                     sample_period: float) -> np.ndarray:
    """One continuous noise stream cut into per-trace rows, shape (n, samples)."""
    wave = noise_waveform(params, n_traces * samples_per_trace * sample_period, sample_period)
    return wave.reshape(n_traces, samples_per_trace)


def predicted_correlation(rho: float, sigma_T: float, sigma_N: float) -> float:
    """Correlation left after adding independent noise of std ``sigma_N`` to the traces."""
    if sigma_T <= 0 or sigma_N < 0 or abs(rho) > 1:
        raise ValueError("need sigma_T > 0, sigma_N >= 0, |rho| <= 1")
    return rho * sigma_T / math.sqrt(sigma_T ** 2 + sigma_N ** 2)


def required_noise_sigma(rho: float, sigma_T: float, rho_target: float) -> float:
    """Smallest noise std that brings ``|rho|`` down to ``rho_target``."""
    if sigma_T <= 0 or not 0 < rho_target:
        raise ValueError("need sigma_T > 0 and rho_target > 0")
    ratio = abs(rho) / rho_target
    return 0.0 if ratio <= 1 else sigma_T * math.sqrt(ratio * ratio - 1)


def full_scale_for_sigma(sigma: float, dac_bits: int = 8) -> float:
    levels = 2 ** dac_bits
    return sigma * (levels - 1) / math.sqrt((levels * levels - 1) / 12.0)
