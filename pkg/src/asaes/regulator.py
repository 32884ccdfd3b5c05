"""Shunt-LDO power-delivery loop: transient solver, attenuation factor, overheads.

Circuit model (all currents in amps, voltages in volts)::

    C_Load dv/dt = i_cs(v) - i_aes(t) - i_bleed
    i_cs(v)      = I_set + g_ds (V_reg_nominal - v)
    dx/dt        = a (G_m (v - V_target) - x)
    i_bleed      = clamp(I_bleed_bias + x, bleed_min, bleed_max)
    i_supply     = i_cs(v) + i_opamp

``I_set`` is the PMOS array setting owned by the switched-mode (SMC) loop. It
steps by one quantum when ``|v - V_target| > delta`` at an SMC sampling
instant and is frozen otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace

import numba
import numpy as np


class SimulationDiverged(RuntimeError):
    """v_reg left [0, V_dd] during integration."""

    def __init__(self, time: float, trace: int, v: float):
        super().__init__(f"v_reg={v:.4g} V left the rail window at t={time:.4g} s (trace {trace})")
        self.time = time
        self.trace = trace
        self.v = v


@dataclass(frozen=True)
class RegulatorParams:
    g_ds: float = 1e-6
    c_load: float = 450e-12
    a_v: float = 100.0
    g_m: float = 1e-3
    a: float = 2 * math.pi * 50e6
    i_cs: float = 20e-3
    i_load_avg: float = 18.89e-3
    i_cs_step: float = 0.1e-3
    v_target: float = 1.0
    delta: float = 0.07
    v_dd: float = 1.2
    v_reg_nominal: float = 1.0
    bleed_max: float = 3e-3
    bleed_min: float = 0.0
    i_opamp: float = 0.4e-3
    smc_period: int = 100
    # optional non-dominant pole at the bleed gate (rad/s); None disables it
    second_pole: float | None = None

    @property
    def G_m(self) -> float:
        return self.a_v * self.g_m

    @property
    def r_ds(self) -> float:
        return 1.0 / self.g_ds

    @property
    def i_bleed_bias(self) -> float:
        return self.i_cs - self.i_load_avg

    @property
    def loop_bandwidth(self) -> float:
        """Fastest loop rate in rad/s."""
        rates = [self.a, self.G_m / self.c_load]
        if self.second_pole:
            rates.append(self.second_pole)
        return max(rates)

    @property
    def default_dt(self) -> float:
        return 1.0 / (50.0 * self.loop_bandwidth)

    @property
    def max_dt(self) -> float:
        return 0.1 / self.loop_bandwidth

    def validate(self) -> "RegulatorParams":
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite, got {v}")
        for name in ("g_ds", "c_load", "a", "delta", "a_v", "g_m", "i_cs_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not self.bleed_max > self.bleed_min >= 0:
            raise ValueError("need bleed_max > bleed_min >= 0")
        if not self.v_dd > self.v_reg_nominal:
            raise ValueError("need v_dd > v_reg_nominal")
        if self.smc_period < 1:
            raise ValueError("smc_period must be >= 1 step")
        if self.second_pole is not None and self.second_pole <= 0:
            raise ValueError("second_pole must be > 0 when set")
        if self.G_m < 10 * self.g_ds:
            warnings.warn("G_m is not much larger than g_ds; attenuation will be poor",
                          RuntimeWarning, stacklevel=2)
        return self

    def with_values(self, **kw) -> "RegulatorParams":
        return replace(self, **kw)


@dataclass
class SimResult:
    time: np.ndarray
    v_reg: np.ndarray
    i_bleed: np.ndarray
    i_supply: np.ndarray
    i_cs_setting: np.ndarray
    i_aes: np.ndarray
    dt: float
    v0: float
    c_load: float
    i_opamp: float
    smc_events: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def droop_max(self) -> float:
        return float(max(0.0, self.v0 - self.v_reg.min()))

    def charge_residual(self) -> float:
        """|C dV - integral(i_cs - i_aes - i_bleed)| relative to delivered charge."""
        i_cs = self.i_supply - self.i_opamp
        net = np.sum(i_cs - self.i_aes - self.i_bleed) * self.dt
        stored = self.c_load * (self.v_reg[-1] - self.v0)
        delivered = np.sum(np.abs(i_cs)) * self.dt
        return float(abs(stored - net) / delivered)


@numba.njit(cache=True)
def _integrate(i_aes, substeps, dt, g_ds, c, G_m, a, p2, v_nom, v_t, delta, v_dd,
               i_set0, bias, bmin, bmax, i_opamp, step_q, smc_period,
               out_supply, rec_v, rec_ib, rec_is, rec_set, ev_t, ev_old, ev_new, stats):
    # Traces are independent; the innermost loop runs across a block of traces
    # so the compiler can vectorise it. Recording is only meaningful for n == 1.
    n, m = i_aes.shape
    record = rec_v.shape[0] > 0
    max_ev = ev_t.shape[0]
    c_dt = c / dt
    inv_denom = 1.0 / (c_dt + g_ds)
    ka = dt * a
    kp = dt * p2
    use_p2 = p2 > 0.0
    g_nom = g_ds * v_nom
    B = 64
    v = np.empty(B)
    x = np.empty(B)
    x2 = np.empty(B)
    i_set = np.empty(B)
    droop = np.empty(B)
    q_net = np.empty(B)
    q_in = np.empty(B)
    acc = np.empty(B)
    n_ev = np.empty(B, dtype=np.int64)
    for t0 in range(0, n, B):
        nb = min(B, n - t0)
        for b in range(nb):
            v[b] = v_t
            x[b] = 0.0
            x2[b] = 0.0
            i_set[b] = i_set0
            droop[b] = 0.0
            q_net[b] = 0.0
            q_in[b] = 0.0
            n_ev[b] = 0
        step = 0
        countdown = smc_period
        for j in range(m):
            for b in range(nb):
                acc[b] = 0.0
            for _ in range(substeps):
                step += 1
                countdown -= 1
                bad = False
                for b in range(nb):
                    i_load = i_aes[t0 + b, j]
                    drive = x2[b] if use_p2 else x[b]
                    ib = min(max(bias + drive, bmin), bmax)
                    v_new = (c_dt * v[b] + i_set[b] + g_nom - i_load - ib) * inv_denom
                    x[b] += ka * (G_m * (v_new - v_t) - x[b])
                    if use_p2:
                        x2[b] += kp * (x[b] - x2[b])
                    v[b] = v_new
                    i_cs = i_set[b] + g_ds * (v_nom - v_new)
                    acc[b] += i_cs
                    q_net[b] += (i_cs - i_load - ib) * dt
                    q_in[b] += i_cs * dt
                    droop[b] = max(droop[b], v_t - v_new)
                    bad |= not (0.0 <= v_new <= v_dd)
                    if record:
                        k = step - 1
                        rec_v[k] = v_new
                        rec_ib[k] = ib
                        rec_is[k] = i_cs + i_opamp
                        rec_set[k] = i_set[b]
                if bad:
                    for b in range(nb):
                        if not (0.0 <= v[b] <= v_dd):
                            stats[t0 + b, 0] = -1.0
                            stats[t0 + b, 1] = step * dt
                            stats[t0 + b, 2] = v[b]
                            return
                if countdown == 0:
                    countdown = smc_period
                    for b in range(nb):
                        err = v[b] - v_t
                        if err > delta or err < -delta:
                            old = i_set[b]
                            i_set[b] = old - step_q if err > delta else old + step_q
                            if record and n_ev[b] < max_ev:
                                ev_t[n_ev[b]] = step * dt
                                ev_old[n_ev[b]] = old
                                ev_new[n_ev[b]] = i_set[b]
                            n_ev[b] += 1
            for b in range(nb):
                out_supply[t0 + b, j] = acc[b] / substeps + i_opamp
        for b in range(nb):
            stats[t0 + b, 0] = n_ev[b]
            stats[t0 + b, 1] = droop[b]
            stats[t0 + b, 2] = abs(c * (v[b] - v_t) - q_net[b]) / q_in[b]


def _check_dt(params: RegulatorParams, dt: float) -> None:
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if dt > params.max_dt * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3g} s exceeds the stability bound {params.max_dt:.3g} s "
                         "(0.1 / max(a, G_m/C_Load))")


def _run(params, i_aes, substeps, dt, record):
    params.validate()
    _check_dt(params, dt)
    i_aes = np.ascontiguousarray(np.atleast_2d(i_aes), dtype=np.float64)
    if not np.all(np.isfinite(i_aes)):
        raise ValueError("i_aes contains non-finite samples")
    n, m = i_aes.shape
    steps = m * substeps if record else 0
    max_ev = steps // params.smc_period + 1 if record else 0
    out = np.empty((n, m))
    rec = [np.empty(steps) for _ in range(4)]
    ev = [np.empty(max_ev) for _ in range(3)]
    stats = np.zeros((n, 3))
    # V_reg_nominal differs from V_target only if the source is biased off-target
    i_set0 = params.i_cs - params.g_ds * (params.v_reg_nominal - params.v_target)
    _integrate(i_aes, substeps, dt, params.g_ds, params.c_load, params.G_m, params.a,
               params.second_pole or 0.0, params.v_reg_nominal, params.v_target, params.delta,
               params.v_dd, i_set0, params.i_bleed_bias, params.bleed_min, params.bleed_max,
               params.i_opamp, params.i_cs_step, params.smc_period,
               out, *rec, *ev, stats)
    bad = np.flatnonzero(stats[:, 0] < 0)
    if bad.size:
        tr = int(bad[0])
        raise SimulationDiverged(float(stats[tr, 1]), tr, float(stats[tr, 2]))
    return out, rec, ev, stats


def simulate(params: RegulatorParams, i_aes, dt: float | None = None) -> SimResult:
    """Integrate the loop for a load-current waveform sampled every ``dt`` seconds.

    Starts from equilibrium (v = V_target, amplifier state zero, PMOS array at
    ``params.i_cs``).
    """
    dt = params.validate().default_dt if dt is None else dt
    i_aes = np.asarray(i_aes, dtype=np.float64).ravel()
    _, (v, ib, i_sup, i_set), (ev_t, ev_old, ev_new), stats = _run(params, i_aes[None, :], 1, dt, True)
    n_ev = int(stats[0, 0])
    events = [(float(ev_t[k]), float(ev_old[k]), float(ev_new[k])) for k in range(min(n_ev, ev_t.size))]
    return SimResult(time=np.arange(1, i_aes.size + 1) * dt, v_reg=v, i_bleed=ib, i_supply=i_sup,
                     i_cs_setting=i_set, i_aes=i_aes, dt=dt, v0=params.v_target,
                     c_load=params.c_load, i_opamp=params.i_opamp, smc_events=events)


@dataclass
class BatchSummary:
    smc_events: np.ndarray
    droop_max: np.ndarray
    charge_residual: np.ndarray


def simulate_traces(params: RegulatorParams, i_aes: np.ndarray, sample_period: float,
                    dt: float | None = None) -> tuple[np.ndarray, BatchSummary]:
    """Run every row of ``i_aes`` (n x samples) through the loop.

    Each row is one encryption starting from equilibrium; the load current is
    held over each sample period and the returned supply current is the mean
    over that period, i.e. what an integrating probe would record.
    """
    dt = params.validate().default_dt if dt is None else dt
    substeps = max(1, math.ceil(sample_period / dt * (1 - 1e-12)))
    out, _, _, stats = _run(params, i_aes, substeps, sample_period / substeps, False)
    return out, BatchSummary(smc_events=stats[:, 0].astype(np.int64),
                             droop_max=stats[:, 1].copy(), charge_residual=stats[:, 2].copy())


def af_transfer(params: RegulatorParams, f):
    """Small-signal i_CS / i_AES at frequency ``f`` (Hz); complex.

    g_ds / (g_ds + s C_Load + a G_m / (s + a)), with an extra bleed-gate pole
    factor on the amplifier term when ``second_pole`` is set.
    """
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be >= 0")
    s = 2j * np.pi * f
    loop = params.a * params.G_m / (s + params.a)
    if params.second_pole:
        loop = loop * params.second_pole / (s + params.second_pole)
    h = params.g_ds / (params.g_ds + s * params.c_load + loop)
    return h if h.ndim else complex(h)


def bode_sweep(params: RegulatorParams, f_grid=None) -> np.ndarray:
    """Structured array (freq_hz, magnitude, magnitude_db, attenuation) over ``f_grid``."""
    if f_grid is None:
        f_grid = np.logspace(0, 10, 201)
    f = np.asarray(f_grid, dtype=np.float64)
    mag = np.abs(af_transfer(params, f))
    table = np.zeros(f.size, dtype=[("freq_hz", "f8"), ("magnitude", "f8"),
                                    ("magnitude_db", "f8"), ("attenuation", "f8")])
    table["freq_hz"] = f
    table["magnitude"] = mag
    table["magnitude_db"] = 20 * np.log10(mag)
    table["attenuation"] = 1.0 / mag
    return table


@dataclass(frozen=True)
class OverheadReport:
    i_bleed: float
    i_noise: float
    i_opamp: float
    i_supply_total: float
    i_ov: float
    p_ov: float
    efficiency: float

    @property
    def efficiency_pct(self) -> float:
        return 100.0 * self.efficiency


def overhead_report(params: RegulatorParams, i_noise: float, i_aes_avg: float) -> OverheadReport:
    """Overhead current, overhead power and power efficiency of the protected core."""
    if i_aes_avg <= 0 or i_noise < 0:
        raise ValueError("need i_aes_avg > 0 and i_noise >= 0")
    i_bleed = params.i_cs - i_aes_avg
    if i_bleed < 0:
        raise ValueError(f"I_CS={params.i_cs:.4g} A is below the average load {i_aes_avg:.4g} A; "
                         "the SMC loop would re-engage")
    total = params.i_cs + i_noise + params.i_opamp
    p_in = total * params.v_dd
    p_load = i_aes_avg * params.v_reg_nominal
    return OverheadReport(i_bleed=i_bleed, i_noise=i_noise, i_opamp=params.i_opamp,
                          i_supply_total=total, i_ov=i_bleed + i_noise + params.i_opamp,
                          p_ov=p_in - p_load, efficiency=p_load / p_in)


def noise_only_overhead(i_noise: float, v_supply: float) -> tuple[float, float]:
    """(I_ov, P_ov) when noise is simply added in parallel to an unprotected core."""
    return i_noise, i_noise * v_supply
