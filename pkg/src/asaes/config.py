"""Experiment configuration: TOML files layered over the shipped defaults profile."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .leakage import SCENARIOS, LeakageParams
from .noise import NoiseParams
from .regulator import RegulatorParams


class ConfigError(ValueError):
    def __init__(self, msg: str, field_name: str | None = None):
        super().__init__(f"{field_name}: {msg}" if field_name else msg)
        self.field_name = field_name


@dataclass(frozen=True)
class AttackParams:
    byte: int = 0
    checkpoint_step: int = 100
    budget: int = 50000
    rho_target: float = 0.02


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    n_traces: int
    seed: int
    key: bytes
    leakage: LeakageParams
    regulator: RegulatorParams
    noise: NoiseParams
    attack: AttackParams
    output: dict = field(default_factory=dict)
    dt: float | None = None

    @property
    def protected(self) -> bool:
        return self.scenario in ("as_aes", "as_aes_plus_noise")

    @property
    def noisy(self) -> bool:
        return self.scenario in ("noise_only", "as_aes_plus_noise")

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def default_dict() -> dict:
    text = resources.files("asaes").joinpath("defaults.toml").read_text()
    return tomllib.loads(text)


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        name = f"{path}{k}"
        if k not in out:
            raise ConfigError("unknown field", name)
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError("expected a table", name)
            out[k] = _merge(out[k], v, name + ".")
        else:
            out[k] = v
    return out


def _params(cls, table: dict, section: str):
    names = {f.name: f for f in dataclasses.fields(cls)}
    kw = {}
    for k, v in table.items():
        if k not in names:
            raise ConfigError("unknown field", f"{section}.{k}")
        if k == "taps":
            v = tuple(int(t) for t in v)
        kw[k] = v
    try:
        obj = cls(**kw)
        if hasattr(obj, "validate"):
            obj.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), section) from e
    return obj


def _parse_key(text) -> bytes:
    try:
        key = bytes.fromhex(str(text))
    except ValueError as e:
        raise ConfigError("not a hex string", "experiment.key") from e
    if len(key) != 16:
        raise ConfigError("must be 16 bytes (32 hex digits)", "experiment.key")
    return key


def from_dict(data: dict) -> ExperimentConfig:
    d = _merge(default_dict(), data)
    exp = d["experiment"]
    if exp["scenario"] not in SCENARIOS:
        raise ConfigError(f"must be one of {SCENARIOS}", "experiment.scenario")
    for name in ("n_traces", "seed"):
        if not isinstance(exp[name], int) or isinstance(exp[name], bool):
            raise ConfigError("must be an integer", f"experiment.{name}")
    if exp["n_traces"] < 1:
        raise ConfigError("must be >= 1", "experiment.n_traces")
    dt = float(exp["dt"])
    if dt < 0:
        raise ConfigError("must be >= 0", "experiment.dt")
    return ExperimentConfig(
        scenario=exp["scenario"], n_traces=exp["n_traces"], seed=exp["seed"],
        key=_parse_key(exp["key"]),
        leakage=_params(LeakageParams, d["leakage"], "leakage"),
        regulator=_params(RegulatorParams, d["regulator"], "regulator"),
        noise=_params(NoiseParams, d["noise"], "noise"),
        attack=_params(AttackParams, d["attack"], "attack"),
        output=dict(d["output"]), dt=dt or None,
    )


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the TOML file at ``path``, then ``overrides`` (nested dict)."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
    if overrides:
        data = _merge_loose(data, overrides)
    return from_dict(data)


def _merge_loose(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict):
            out[k] = _merge_loose(out.get(k, {}), v)
        else:
            out[k] = v
    return out
