"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error (bad config or trace file).
"""

from __future__ import annotations

import sys

import click
import numpy as np

from . import cpa, io, regulator
from .config import ConfigError, load_config
from .experiments import SweepRow, protect, run_scenario, sweep, synthesize


class DataError(click.ClickException):
    exit_code = 2


def _cfg(config_path, traces=None, seed=None, scenario=None):
    exp = {}
    if traces is not None:
        exp["n_traces"] = traces
    if seed is not None:
        exp["seed"] = seed
    if scenario is not None:
        exp["scenario"] = scenario
    try:
        return load_config(config_path, {"experiment": exp} if exp else None)
    except (ConfigError, OSError) as e:
        raise DataError(f"config: {e}") from e


def _read(path):
    try:
        return io.read_traces(path)
    except (io.TraceFormatError, OSError) as e:
        raise DataError(f"{path}: {e}") from e


def _bytes_opt(byte):
    return list(range(16)) if byte is None else [byte]


config_opt = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                          help="TOML experiment config layered over the defaults profile.")
out_opt = click.option("--out", "out", type=click.Path(dir_okay=False), default=None,
                       help="Output path (defaults to the config's [output] entry).")


@click.group(context_settings={"show_default": True})
def cli():
    """Power side-channel simulation for AES with an attenuated-signature shunt LDO."""


@cli.command()
@config_opt
@click.option("--traces", type=click.IntRange(min=1), default=None, help="Number of encryptions.")
@click.option("--seed", type=int, default=None, help="Master seed for plaintexts and noise.")
@click.option("--scenario", type=click.Choice(["unprotected", "noise_only", "as_aes", "as_aes_plus_noise"]),
              default="unprotected", help="Scenario to synthesize directly.")
@click.option("--no-key", is_flag=True, help="Write an attacker-view file without the key block.")
@out_opt
def synth(config_path, traces, seed, scenario, no_key, out):
    """Synthesize a trace file."""
    cfg = _cfg(config_path, traces, seed, scenario)
    ts = run_scenario(cfg) if scenario != "unprotected" else synthesize(cfg)
    path = out or cfg.output["traces"]
    io.write_traces(path, ts, include_key=not no_key)
    click.echo(f"wrote {ts.n_traces} x {ts.samples_per_trace} {ts.scenario} traces to {path}")


@cli.command("protect")
@click.argument("trace_file", type=click.Path(dir_okay=False))
@config_opt
@click.option("--scenario", type=click.Choice(["noise_only", "as_aes", "as_aes_plus_noise"]), default=None,
              help="Countermeasure to apply (defaults to the config scenario).")
@out_opt
def protect_cmd(trace_file, config_path, scenario, out):
    """Pass unprotected traces through the regulator and/or noise injection."""
    cfg = _cfg(config_path)
    scenario = scenario or cfg.scenario
    if scenario == "unprotected":
        raise click.UsageError("protect needs a countermeasure scenario")
    ts = _read(trace_file)
    try:
        out_ts, summary = protect(ts, cfg, scenario)
    except (ValueError, regulator.SimulationDiverged) as e:
        raise DataError(str(e)) from e
    path = out or cfg.output["traces"]
    io.write_traces(path, out_ts, include_key=ts.key is not None)
    msg = f"wrote {out_ts.n_traces} {scenario} traces to {path}"
    if summary is not None:
        msg += (f"; max droop {summary.droop_max.max() * 1e3:.2f} mV, "
                f"{int(summary.smc_events.sum())} SMC events")
    click.echo(msg)


@cli.command("attack")
@click.argument("trace_file", type=click.Path(dir_okay=False))
@click.option("--byte", "byte", type=click.IntRange(0, 15), default=None, help="Key byte (default: all).")
@click.option("--traces", type=click.IntRange(min=2), default=None, help="Use only the first N traces.")
@out_opt
def attack_cmd(trace_file, byte, traces, out):
    """Run CPA and write the key ranking as CSV."""
    ts = _read(trace_file)
    if traces:
        ts = ts.head(traces)
    reports = [cpa.attack(ts, b) for b in _bytes_opt(byte)]
    if out:
        io.write_attack_csv(out, reports)
    for r in reports:
        status = "" if r.true_key is None else (" ok" if r.success else f" (true {r.true_key:02x}, rank {r.rank_of(r.true_key)})")
        click.echo(f"byte {r.byte_index:2d}: {r.recovered:02x} peak {r.peak[r.recovered]:.4f} "
                   f"margin {r.margin:+.4f}{status}")


@cli.command("mtd")
@click.argument("trace_file", type=click.Path(dir_okay=False))
@click.option("--byte", "byte", type=click.IntRange(0, 15), default=None, help="Key byte (default: all).")
@click.option("--budget", type=click.IntRange(min=2), default=None, help="Trace budget.")
@click.option("--step", type=click.IntRange(min=1), default=100, help="Checkpoint step.")
@out_opt
def mtd_cmd(trace_file, byte, budget, step, out):
    """Correlation evolution and measurements-to-disclosure per key byte."""
    ts = _read(trace_file)
    if ts.key is None:
        raise DataError(f"{trace_file}: MTD needs a trace file with the key block")
    curves = [cpa.mtd_analysis(ts, b, step, budget) for b in _bytes_opt(byte)]
    if out:
        io.write_mtd_csv(out, curves)
    for c in curves:
        mtd = c.mtd if c.disclosed else f"not disclosed (> {c.checkpoints[-1]})"
        click.echo(f"byte {c.byte_index:2d}: MTD {mtd}")


@cli.command()
@config_opt
@click.option("--fmin", type=float, default=1.0, help="Lowest frequency in Hz.")
@click.option("--fmax", type=float, default=1e10, help="Highest frequency in Hz.")
@click.option("--points", type=click.IntRange(min=2), default=201)
@out_opt
def bode(config_path, fmin, fmax, points, out):
    """Tabulate the attenuation factor magnitude."""
    if not 0 < fmin < fmax:
        raise click.UsageError("need 0 < fmin < fmax")
    cfg = _cfg(config_path)
    table = regulator.bode_sweep(cfg.regulator, np.logspace(np.log10(fmin), np.log10(fmax), points))
    path = out or "bode.csv"
    io.write_bode_csv(path, table)
    worst = table["magnitude"].max()
    click.echo(f"wrote {points} points to {path}; worst-case attenuation {1 / worst:.0f}x")


@cli.command("sweep")
@config_opt
@click.option("--param", required=True, help="Parameter name (i_cs, bleed_capacity, r_ds, c_load, v_dd, "
                                             "noise_full_scale or section.field).")
@click.option("--grid", required=True, help="Comma-separated values in SI units.")
@click.option("--traces", type=click.IntRange(min=2), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=click.IntRange(min=1), default=1, help="Worker processes.")
@out_opt
def sweep_cmd(config_path, param, grid, traces, seed, jobs, out):
    """Evaluate a design-space sweep and write a summary CSV."""
    try:
        values = [float(v) for v in grid.split(",") if v.strip()]
    except ValueError as e:
        raise click.UsageError(f"--grid: {e}") from e
    if not values:
        raise click.UsageError("--grid is empty")
    cfg = _cfg(config_path, traces, seed)
    try:
        rows = sweep(cfg, param, values, jobs=jobs)
    except KeyError as e:
        raise click.UsageError(str(e.args[0])) from e
    path = out or cfg.output["report"]
    io.write_csv(path, ["param", *SweepRow.HEADER], ([param, *r.as_row()] for r in rows))
    for r in rows:
        click.echo(f"{param}={r.value:g}: rho={r.rho:.4f} required_noise={r.required_noise:.3g} A "
                   f"MTD={r.mtd if r.mtd is not None else 'not disclosed'} I_ov={r.i_ov:.4g} A P_ov={r.p_ov:.4g} W")


@cli.command()
@config_opt
@click.option("--noise", "i_noise", type=float, default=None, help="Injected noise current in A.")
@click.option("--load", "i_load", type=float, default=None, help="Average AES current in A.")
def report(config_path, i_noise, i_load):
    """Print the overhead current, overhead power and efficiency."""
    cfg = _cfg(config_path)
    i_noise = cfg.noise.full_scale if i_noise is None else i_noise
    i_load = cfg.leakage.baseline_current if i_load is None else i_load
    try:
        r = regulator.overhead_report(cfg.regulator, i_noise, i_load)
    except ValueError as e:
        raise DataError(str(e)) from e
    click.echo(f"I_bleed    = {r.i_bleed * 1e3:.2f} mA")
    click.echo(f"I_noise    = {r.i_noise * 1e3:.2f} mA")
    click.echo(f"I_opamp    = {r.i_opamp * 1e3:.2f} mA")
    click.echo(f"I_ov       = {r.i_ov * 1e3:.2f} mA")
    click.echo(f"P_ov       = {r.p_ov * 1e3:.2f} mW")
    click.echo(f"efficiency = {r.efficiency_pct:.2f} %")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="asaes", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.Abort:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
