"""Run configuration: JSON file sections plus named presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dsp import StftConfig
from .geometry import Z_PLANE
from .neural.model import ModelConfig
from .neural.train import TrainConfig
from .roomsim import SimConfig
from .srp import DEFAULT_MODE
from .targets import TargetConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    seed: int = 0
    threads: int = 1
    z_plane: float = Z_PLANE
    srp_mode: str = DEFAULT_MODE

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def flat(self) -> dict[str, object]:
        """``section.key -> value`` pairs for logging."""
        out = {}
        for key, value in self.to_dict().items():
            if isinstance(value, dict):
                out.update({f"{key}.{k}": v for k, v in value.items()})
            else:
                out[key] = value
        return out


_SECTIONS = {"sim": SimConfig, "model": ModelConfig, "target": TargetConfig, "train": TrainConfig, "stft": StftConfig}

PRESETS = {
    "anechoic-desk": {"sim": {"name": "AnechoicSim-desk", "n_train": 200, "n_val": 50, "n_test": 50,
                              "reverberant": False}, "train": {"max_epochs": 20}},
    "reverb-desk": {"sim": {"name": "ReverbSim-desk", "n_train": 200, "n_val": 50, "n_test": 50,
                            "reverberant": True}, "train": {"max_epochs": 20}},
    "anechoic-paper": {"sim": {"name": "AnechoicSim", "n_train": 10000, "n_val": 2500, "n_test": 2500,
                               "reverberant": False}, "train": {"max_epochs": 50}},
    "reverb-paper": {"sim": {"name": "ReverbSim", "n_train": 10000, "n_val": 2500, "n_test": 2500,
                             "reverberant": True}, "train": {"max_epochs": 50}},
}


def _build_section(name: str, current, values: dict):
    cls = _SECTIONS[name]
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {', '.join(unknown)}")
    merged = {**dataclasses.asdict(current), **values}
    try:
        return cls(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from exc


def apply(config: RunConfig, values: dict) -> RunConfig:
    """Overlay a nested dict onto ``config``; unknown keys raise :class:`ConfigError`."""
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(values) - top)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    updates = {}
    for key, value in values.items():
        if key in _SECTIONS:
            updates[key] = _build_section(key, getattr(config, key), value)
        else:
            updates[key] = value
    return dataclasses.replace(config, **updates)


def load(path=None, preset: str | None = None, overrides: dict | None = None) -> RunConfig:
    config = RunConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
        config = apply(config, PRESETS[preset])
    if path is not None:
        try:
            values = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        config = apply(config, values)
    if overrides:
        config = apply(config, overrides)
    return config
