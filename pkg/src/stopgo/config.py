"""Sectioned INI run configuration covering every tunable default.

Each section maps onto one frozen dataclass. Values are parsed by the type of
the dataclass default, unknown sections or keys are rejected, and the
dataclass validators run on load so a bad file fails before any work starts.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from .ddpg import DdpgConfig
from .metrics import FuelModelConfig, RollingConfig
from .reward import RewardConfig
from .sim import KraussParams, SimConfig
from .trajdata import CongestionFilterConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section/key."""


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out_dir: str = "."
    eval_horizon: int = 0  # 0 = as long as the profile allows


SECTIONS = {
    "run": RunSection,
    "sim": SimConfig,
    "krauss": KraussParams,
    "reward": RewardConfig,
    "ddpg": DdpgConfig,
    "rolling": RollingConfig,
    "fuel": FuelModelConfig,
    "congestion": CongestionFilterConfig,
}

# seeds come from [run] only
_HIDDEN = {("sim", "seed"), ("ddpg", "seed")}
# fields whose default is None
_OPTIONAL = {("sim", "initial_speed"): float, ("rolling", "end"): int}


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    sim: SimConfig = field(default_factory=SimConfig)
    krauss: KraussParams = field(default_factory=KraussParams)
    reward: RewardConfig = field(default_factory=RewardConfig)
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    rolling: RollingConfig = field(default_factory=RollingConfig)
    fuel: FuelModelConfig = field(default_factory=FuelModelConfig)
    congestion: CongestionFilterConfig = field(default_factory=CongestionFilterConfig)

    @property
    def seed(self):
        return self.run.seed

    def sim_config(self):
        return replace(self.sim, seed=self.run.seed)

    def ddpg_config(self):
        return replace(self.ddpg, seed=self.run.seed)

    def with_values(self, assignments):
        """Apply ``{"section.key": "text"}`` overrides, parsing like the file."""
        grouped = {}
        for dotted, text in assignments.items():
            section, sep, key = dotted.partition(".")
            if not sep:
                raise ConfigError(f"override {dotted!r} must look like section.key")
            grouped.setdefault(section, {})[key] = text
        return _build(grouped, base=self)

    def to_ini(self):
        buf = io.StringIO()
        for name in SECTIONS:
            obj = getattr(self, name)
            buf.write(f"[{name}]\n")
            for f in fields(obj):
                if (name, f.name) in _HIDDEN:
                    continue
                buf.write(f"{f.name} = {_format(getattr(obj, f.name))}\n")
            buf.write("\n")
        return buf.getvalue()


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse(section, key, text, default):
    where = f"[{section}] {key}"
    text = text.strip()
    try:
        if (section, key) in _OPTIONAL:
            return None if text.lower() == "none" else _OPTIONAL[section, key](text)
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(p) for p in text.split(",") if p.strip())
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _build(raw, base=None):
    base = base or RunConfig()
    parts = {}
    for name, cls in SECTIONS.items():
        values = dict(raw.get(name, {}))
        current = getattr(base, name)
        known = {f.name for f in fields(cls)} - {k for s, k in _HIDDEN if s == name}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"[{name}] unknown key {unknown[0]!r}")
        parsed = {k: _parse(name, k, v, getattr(current, k)) for k, v in values.items()}
        try:
            parts[name] = replace(current, **parsed)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{name}] {exc}") from None
    extra = sorted(set(raw) - set(SECTIONS))
    if extra:
        raise ConfigError(f"unknown section [{extra[0]}]")
    return RunConfig(**parts)


def parse_config(text, source="<string>"):
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(source))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return _build({s: dict(cp.items(s)) for s in cp.sections()})


def load_config(path):
    """Read a config file; a missing file raises ``OSError``."""
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), path)
