"""INI run configuration for the command-line pipeline."""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields

from .plate import PlateParameters
from .synthesis import DEFAULT_OBSERVER_WEIGHT, SynthesisConfig


class ConfigError(ValueError):
    pass


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys like E, L1 are case sensitive
    return cp


def _parse_schedule(text: str) -> tuple:
    segs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            t, v = item.split(":")
            segs.append((float(t), float(v)))
        except ValueError as exc:
            raise ConfigError(f"bad schedule entry {item!r}; expected 'time:value'") from exc
    if not segs:
        raise ConfigError("schedule is empty")
    return tuple(segs)


def _format_schedule(segs) -> str:
    return ", ".join(f"{t!r}:{v!r}" for t, v in segs)


@dataclass(frozen=True)
class GridConfig:
    n_cells_1: int = 6
    n_cells_2: int = 6
    high_order_1: int = 13
    high_order_2: int = 12


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 1e-3
    T: float = 14.0
    activation_time: float = 2.0
    stride: int = 100
    u_ref_amplitude: float = 1.0
    observer_weight: float = DEFAULT_OBSERVER_WEIGHT
    schedule: tuple = ((0.0, 0.0), (2.0, 1.0), (6.0, 0.0), (10.0, -0.75))

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.T < 0:
            raise ConfigError(f"T must be nonnegative, got {self.T}")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if not self.observer_weight > 0:
            raise ConfigError("observer_weight must be positive")


@dataclass(frozen=True)
class RunConfig:
    plate: PlateParameters = field(default_factory=PlateParameters)
    grid: GridConfig = field(default_factory=GridConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def to_ini(self) -> str:
        cp = _parser()
        for section in ("plate", "grid", "synthesis", "simulation"):
            values = asdict(getattr(self, section))
            if section == "simulation":
                values["schedule"] = _format_schedule(values["schedule"])
            cp[section] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in values.items()}
        lines = []
        for name in cp.sections():
            lines.append(f"[{name}]")
            lines += [f"{k} = {v}" for k, v in cp[name].items()]
            lines.append("")
        return "\n".join(lines)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_ini())

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = _parser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        known = {"plate": PlateParameters, "grid": GridConfig, "synthesis": SynthesisConfig, "simulation": SimulationConfig}
        unknown = set(cp.sections()) - set(known)
        if unknown:
            raise ConfigError(f"unknown section(s): {sorted(unknown)}")
        parts = {}
        for name, klass in known.items():
            kwargs = {}
            types = {f.name: f.default for f in fields(klass)}
            if name in cp:
                for key, raw in cp[name].items():
                    if key not in types:
                        raise ConfigError(f"unknown key {name}.{key}")
                    kwargs[key] = _coerce(name, key, raw, types[key])
            try:
                parts[name] = klass(**kwargs)
            except ValueError as exc:
                raise ConfigError(f"[{name}] {exc}") from exc
        try:
            parts["plate"].validate()
        except ValueError as exc:
            raise ConfigError(f"[plate] {exc}") from exc
        return cls(**parts)

    @classmethod
    def read(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_ini(fh.read())


def _coerce(section, key, raw, default):
    try:
        if key == "schedule":
            return _parse_schedule(raw)
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
