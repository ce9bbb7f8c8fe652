"""Run configuration: INI files, JSON echoes and command-line overrides."""

from __future__ import annotations

import configparser
import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bps import BpsConfig
from .dlm import Discounts
from .simlab import AgentConfig, DgpConfig, StudyConfig, smoke_config

PROTOCOLS = {"warm": "warm_start", "warm_start": "warm_start", "full": "full_rerun", "full_rerun": "full_rerun"}
PRESETS = ("full", "smoke")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class TheorySettings:
    n_samples: int = 1_000_000
    n_configs: int = 100
    n_paths: int = 500
    path_length: int = 20
    sigmas: tuple = (1.0, 10.0, 100.0, 1e4)
    corollary_path_length: int = 10


@dataclass
class RunConfig:
    master_seed: int = 0
    replications: int = 100
    output_dir: str = "results"
    protocol: str = "warm_start"
    threads: int = 1
    rep: int = 0
    dgp: DgpConfig = field(default_factory=DgpConfig)
    agents: AgentConfig = field(default_factory=AgentConfig)
    bps: BpsConfig = field(default_factory=BpsConfig)
    theory: TheorySettings = field(default_factory=TheorySettings)

    def validate(self) -> "RunConfig":
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {sorted(PROTOCOLS)}")
        self.protocol = PROTOCOLS[self.protocol]
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        out = Path(self.output_dir)
        existing = next((q for q in (out, *out.parents) if q.exists()), Path("."))
        if not existing.is_dir() or not os.access(existing, os.W_OK):
            raise ConfigError(f"output_dir {str(out)!r} is not a writable directory")
        if not 0 <= self.rep < self.replications:
            raise ConfigError(f"rep must lie in [0, replications) = [0, {self.replications})")
        t = self.theory
        if t.n_samples < 1000:
            raise ConfigError("n_samples must be >= 1000")
        if t.n_paths < 2 or t.path_length < 3 or t.n_configs < 1:
            raise ConfigError("n_paths >= 2, path_length >= 3 and n_configs >= 1 are required")
        if len(t.sigmas) == 0 or any(s <= 0 for s in t.sigmas):
            raise ConfigError("sigmas must be a non-empty list of positive numbers")
        return self

    def study(self) -> StudyConfig:
        return StudyConfig(self.dgp, self.agents, self.bps, self.protocol, self.master_seed)

    # -- serialisation ------------------------------------------------------

    def to_sections(self) -> dict:
        """Flat ``{section: {key: value}}`` view with plain Python values."""
        bps = self.bps
        return {
            "run": dict(master_seed=self.master_seed, replications=self.replications,
                        output_dir=str(self.output_dir), protocol=self.protocol,
                        threads=self.threads, rep=self.rep),
            "dgp": dataclasses.asdict(self.dgp),
            "agents": dict(n0=self.agents.n0, s0=self.agents.s0, prior_scale=self.agents.prior_scale,
                           delta=self.agents.discounts.delta, beta=self.agents.discounts.beta,
                           intercept=self.agents.intercept),
            "bps": dict(m0=None if bps.m0 is None else [float(v) for v in bps.m0], s0=bps.s0,
                        n0=bps.n0, delta=bps.discounts.delta, beta=bps.discounts.beta,
                        burn_in=bps.burn_in, kept_draws=bps.kept_draws,
                        warm_start_burn=bps.warm_start_burn, prior_scale=bps.prior_scale),
            "theory": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in dataclasses.asdict(self.theory).items()},
        }

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for sec, vals in self.to_sections().items():
            cp[sec] = {k: _to_text(v) for k, v in vals.items()}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp[sec].items())
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_sections(cls, sections: dict, base: "RunConfig | None" = None) -> "RunConfig":
        flat = (base or cls()).to_sections()
        for sec, vals in sections.items():
            if sec not in flat:
                raise ConfigError(f"unknown section [{sec}]")
            for key, raw in vals.items():
                if key not in flat[sec]:
                    raise ConfigError(f"unknown field {sec}.{key}")
                flat[sec][key] = _coerce(f"{sec}.{key}", raw, flat[sec][key], key)
        return cls._build(flat)

    @classmethod
    def _build(cls, s: dict) -> "RunConfig":
        try:
            dgp = DgpConfig(**s["dgp"])
            a = s["agents"]
            agents = AgentConfig(a["n0"], a["s0"], a["prior_scale"],
                                 Discounts(delta=a["delta"], beta=a["beta"]), a["intercept"])
            b = s["bps"]
            bps = BpsConfig(m0=None if b["m0"] is None else np.asarray(b["m0"], float),
                            s0=b["s0"], n0=b["n0"], discounts=Discounts(delta=b["delta"], beta=b["beta"]),
                            burn_in=b["burn_in"], kept_draws=b["kept_draws"],
                            warm_start_burn=b["warm_start_burn"], prior_scale=b["prior_scale"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        th = dict(s["theory"])
        th["sigmas"] = tuple(float(v) for v in th["sigmas"])
        return cls(dgp=dgp, agents=agents, bps=bps, theory=TheorySettings(**th), **s["run"])


def _to_text(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return ", ".join(_to_text(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v).lower() if isinstance(v, bool) else str(v)


def _coerce(name, raw, default, key):
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if key == "m0":
            if raw is None or raw == "":
                return None
            vals = raw if isinstance(raw, list) else raw.split(",")
            return [float(v) for v in vals]
        if isinstance(default, list):
            vals = raw if isinstance(raw, list) else [v for v in raw.split(",") if v.strip()]
            return [float(v) for v in vals]
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse {name} = {raw!r}") from None


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    """Read an INI file, or the ``config`` block of a JSON run summary."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    if path.suffix == ".json":
        try:
            data = json.loads(path.read_text())["config"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"{path} is not a run summary: {exc}") from None
        return RunConfig.from_sections(data, base)
    cp = configparser.ConfigParser()
    try:
        cp.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    return RunConfig.from_sections({s: dict(cp[s]) for s in cp.sections()}, base)


def preset(name: str) -> RunConfig:
    """``full``: 100 replications, full MCMC sizes. ``smoke``: 10
    replications with shortened chains."""
    if name == "full":
        return RunConfig()
    if name == "smoke":
        return RunConfig(replications=10, bps=smoke_config().bps)
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
