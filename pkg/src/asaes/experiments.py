"""Scenario pipelines (unprotected, noise only, AS-AES, AS-AES + noise) and sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import cpa, noise, regulator
from .config import ExperimentConfig
from .leakage import TraceSet, synthesize_set


def synthesize(cfg: ExperimentConfig, n_traces: int | None = None) -> TraceSet:
    return synthesize_set(cfg.key, n_traces or cfg.n_traces, cfg.leakage, cfg.seed)


def injected_noise(cfg: ExperimentConfig, n_traces: int, samples_per_trace: int,
                   sample_period: float) -> np.ndarray:
    return noise.noise_for_traces(cfg.noise, n_traces, samples_per_trace, sample_period)


def protect(traces: TraceSet, cfg: ExperimentConfig, scenario: str | None = None,
            inject: bool = True) -> tuple[TraceSet, regulator.BatchSummary | None]:
    """Turn unprotected load-current traces into what the attacker sees under ``scenario``.

    Plaintexts, ciphertexts and key are carried over unchanged.
    """
    scenario = scenario or cfg.scenario
    if traces.scenario != "unprotected":
        raise ValueError(f"protect expects unprotected traces, got {traces.scenario!r}")
    samples = np.asarray(traces.samples, dtype=np.float64)
    summary = None
    if scenario in ("as_aes", "as_aes_plus_noise"):
        samples, summary = regulator.simulate_traces(cfg.regulator, samples, traces.sample_period, cfg.dt)
    if inject and scenario in ("noise_only", "as_aes_plus_noise"):
        samples = samples + injected_noise(cfg, traces.n_traces, traces.samples_per_trace,
                                           traces.sample_period)
    return traces.with_samples(samples, scenario), summary


def run_scenario(cfg: ExperimentConfig, n_traces: int | None = None) -> TraceSet:
    return protect(synthesize(cfg, n_traces), cfg)[0]


# -- sweeps -----------------------------------------------------------------

def _set_i_cs(cfg: ExperimentConfig, v: float) -> ExperimentConfig:
    reg = cfg.regulator
    # keep the bleed able to sink twice its bias so the loop has an equilibrium
    bleed_max = max(reg.bleed_max, 2 * (v - reg.i_load_avg))
    return cfg.replace(regulator=reg.with_values(i_cs=v, bleed_max=bleed_max))


def _set_bleed_capacity(cfg: ExperimentConfig, v: float) -> ExperimentConfig:
    # bleed sized for capacity v and biased mid-range: I_CS = I_avg + v / 2
    reg = cfg.regulator
    return cfg.replace(regulator=reg.with_values(bleed_max=v, i_cs=reg.i_load_avg + v / 2))


def _set_r_ds(cfg: ExperimentConfig, v: float) -> ExperimentConfig:
    return cfg.replace(regulator=cfg.regulator.with_values(g_ds=1.0 / v))


SWEEP_PARAMS = {
    "i_cs": _set_i_cs,
    "bleed_capacity": _set_bleed_capacity,
    "r_ds": _set_r_ds,
    "noise_full_scale": lambda cfg, v: cfg.replace(noise=cfg.noise.with_values(full_scale=v)),
}


def apply_param(cfg: ExperimentConfig, name: str, value: float) -> ExperimentConfig:
    """Set a sweep parameter: a named coupled setter or any ``section.field``."""
    if name in SWEEP_PARAMS:
        return SWEEP_PARAMS[name](cfg, value)
    section, _, fname = name.rpartition(".")
    if not section:
        for sec in ("regulator", "leakage", "noise"):
            if fname in {f.name for f in fields(getattr(cfg, sec))}:
                section = sec
                break
    if section not in ("regulator", "leakage", "noise", "attack"):
        raise KeyError(f"unknown sweep parameter {name!r}")
    block = getattr(cfg, section)
    if fname not in {f.name for f in fields(block)}:
        raise KeyError(f"unknown sweep parameter {name!r}")
    cur = getattr(block, fname)
    if isinstance(cur, int) and not isinstance(cur, bool):
        value = int(value)
    return cfg.replace(**{section: block.__class__(**{**block.__dict__, fname: value})})


@dataclass
class SweepRow:
    value: float
    rho_clean: float
    sigma_t: float
    required_noise: float
    rho: float
    mtd: int | None
    i_ov: float
    p_ov: float
    efficiency: float
    i_ov_required: float
    p_ov_required: float
    smc_events: int
    droop_max: float

    HEADER = ("value", "rho_clean", "sigma_t", "required_noise", "rho", "mtd", "i_ov", "p_ov",
              "efficiency", "i_ov_required", "p_ov_required", "smc_events", "droop_max")

    def as_row(self) -> list:
        return [getattr(self, h) if h != "mtd" else (self.mtd if self.mtd is not None else "not_disclosed")
                for h in self.HEADER]


def _overheads(cfg: ExperimentConfig, i_noise: float) -> tuple[float, float, float]:
    if not cfg.protected:
        i_ov, p_ov = regulator.noise_only_overhead(i_noise, cfg.regulator.v_reg_nominal)
        p_load = cfg.leakage.baseline_current * cfg.regulator.v_reg_nominal
        return i_ov, p_ov, p_load / (p_load + p_ov)
    try:
        r = regulator.overhead_report(cfg.regulator, i_noise, cfg.leakage.baseline_current)
    except ValueError:
        return math.nan, math.nan, math.nan
    return r.i_ov, r.p_ov, r.efficiency


def evaluate_point(cfg: ExperimentConfig, base: TraceSet | None = None) -> SweepRow:
    """Attack one operating point: clean leakage, noise needed, MTD and overheads."""
    byte = cfg.attack.byte
    base = base if base is not None else synthesize(cfg)
    clean, summary = protect(base, cfg, inject=False)
    rep = cpa.attack(clean, byte)
    k = rep.true_key
    rho0 = float(rep.peak[k])
    sigma_t = float(np.std(clean.samples[:, rep.best_sample[k]]))
    req = 0.0
    if sigma_t > 0:
        req = noise.full_scale_for_sigma(
            noise.required_noise_sigma(rho0, sigma_t, cfg.attack.rho_target), cfg.noise.dac_bits)
    attacked = clean
    if cfg.noisy:
        attacked = clean.with_samples(clean.samples + injected_noise(
            cfg, clean.n_traces, clean.samples_per_trace, clean.sample_period))
    curve = cpa.mtd_analysis(attacked, byte, cfg.attack.checkpoint_step)
    i_noise = cfg.noise.full_scale if cfg.noisy else 0.0
    i_ov, p_ov, eff = _overheads(cfg, i_noise)
    i_ov_r, p_ov_r, _ = _overheads(cfg, req)
    return SweepRow(value=math.nan, rho_clean=rho0, sigma_t=sigma_t, required_noise=req,
                    rho=float(curve.final.peak[k]), mtd=curve.mtd, i_ov=i_ov, p_ov=p_ov,
                    efficiency=eff, i_ov_required=i_ov_r, p_ov_required=p_ov_r,
                    smc_events=int(summary.smc_events.sum()) if summary else 0,
                    droop_max=float(summary.droop_max.max()) if summary else 0.0)


def _sweep_point(args):
    cfg, name, value = args
    point = apply_param(cfg, name, value)
    row = evaluate_point(point)
    row.value = value
    return row


def sweep(cfg: ExperimentConfig, name: str, grid, jobs: int = 1) -> list[SweepRow]:
    """Evaluate ``cfg`` at every grid value of parameter ``name``.

    Points are independent and seeded from the config, so the result does not
    depend on ``jobs``.
    """
    tasks = [(cfg, name, float(v)) for v in grid]
    if tasks:
        # fail on a bad parameter name before spawning workers
        apply_param(cfg, name, tasks[0][2])
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]
