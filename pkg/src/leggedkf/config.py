"""Run configuration: flat key-value config files with sections.

A run file has four sections.  ``[run]`` picks the scenario kind and the
global timing/seed; ``[scenario]`` holds builder-specific parameters (see
``scenarios``); ``[estimator]`` configures detection, odometry mode,
initialization offsets and hidden contacts; ``[noise]`` overrides filter
covariance blocks by name.  Comments (#) and blank lines are allowed.

Example::

    [run]
    kind = standing
    duration = 8.0
    dt = 0.005
    seed = 7

    [scenario]
    mass = 100.0
    noise_on = false

    [estimator]
    mode = none
    threshold = 0.10
    init_pos_offset = 0.05, 0.0, 0.0
    init_rot_offset_deg = 0.0, 5.0, 0.0

    [noise]
    p0_pos = 0.01
"""

from __future__ import annotations

import configparser
import inspect
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import scenarios
from .mekf import DEFAULT_FD_EPS
from .noise import NoiseConfig
from .odometry import OdometryMode
from .simulator import SimScenario

__all__ = ["EstimatorSettings", "RunConfig", "load_config", "build_scenario", "ConfigError"]

_BUILDERS = {
    "standing": scenarios.standing_scenario,
    "tripod": scenarios.tripod_scenario,
    "walk": scenarios.walk_scenario,
    "free_fall": scenarios.free_fall_scenario,
}


class ConfigError(ValueError):
    pass


@dataclass
class EstimatorSettings:
    """Everything the estimation pipeline needs beyond the scenario."""

    mode: OdometryMode = OdometryMode.PLANAR
    threshold_fraction: float = 0.10
    hysteresis: bool = True
    break_ratio: float = 0.8
    ground_height: float = 0.0
    init_pos_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    init_rotvec_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    hidden_contacts: frozenset = frozenset()
    baseline_on: bool = True
    noise: NoiseConfig = field(default_factory=NoiseConfig.default)
    fd_eps: float = DEFAULT_FD_EPS
    timing_in_csv: bool = False

    def __post_init__(self):
        self.init_pos_offset = np.asarray(self.init_pos_offset, dtype=float).reshape(3)
        self.init_rotvec_offset = np.asarray(self.init_rotvec_offset, dtype=float).reshape(3)
        self.hidden_contacts = frozenset(int(c) for c in self.hidden_contacts)
        if not 0.0 < self.threshold_fraction < 1.0:
            raise ConfigError(
                f"threshold fraction must be in (0, 1), got {self.threshold_fraction}"
            )


@dataclass
class RunConfig:
    kind: str
    scenario_params: dict = field(default_factory=dict)
    settings: EstimatorSettings = field(default_factory=EstimatorSettings)

    def build_scenario(self) -> SimScenario:
        return build_scenario(self.kind, **self.scenario_params)

    def with_overrides(self, **scenario_params) -> "RunConfig":
        merged = dict(self.scenario_params)
        merged.update(scenario_params)
        return replace(self, scenario_params=merged)


def build_scenario(kind: str, **params) -> SimScenario:
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise ConfigError(
            f"unknown scenario kind {kind!r} (expected one of {sorted(_BUILDERS)})"
        ) from None
    accepted = set(inspect.signature(builder).parameters)
    unknown = set(params) - accepted
    if unknown:
        raise ConfigError(f"unknown [scenario] keys for kind {kind!r}: {sorted(unknown)}")
    return builder(**params)


def _parse_scalar(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "on", "yes"):
        return True
    if lowered in ("false", "off", "no"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_value(text: str):
    if "," in text:
        return [_parse_scalar(part) for part in text.split(",")]
    return _parse_scalar(text)


def load_config(path) -> RunConfig:
    """Parse a run file; raises ConfigError with file/line context."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh, source=str(path))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None

    run_section = dict(parser["run"]) if parser.has_section("run") else {}
    if "kind" not in run_section:
        raise ConfigError(f"{path}: [run] section must set 'kind'")
    kind = run_section.pop("kind").strip()

    params = {key: _parse_value(value) for key, value in run_section.items()}
    if parser.has_section("scenario"):
        for key, value in parser["scenario"].items():
            params[key] = _parse_value(value)
    # probe the builder signature now so errors carry the file name
    try:
        build_scenario(kind, **params)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    noise = NoiseConfig.default()
    if parser.has_section("noise"):
        known = {f.name for f in fields(NoiseConfig)}
        overrides = {}
        for key, value in parser["noise"].items():
            if key not in known:
                raise ConfigError(f"{path}: unknown [noise] key {key!r}")
            overrides[key] = _parse_value(value)
        noise = noise.with_overrides(**overrides)

    settings_kwargs: dict = {"noise": noise}
    if parser.has_section("estimator"):
        section = {key: _parse_value(value) for key, value in parser["estimator"].items()}
        if "mode" in section:
            settings_kwargs["mode"] = OdometryMode.parse(str(section.pop("mode")))
        if "threshold" in section:
            settings_kwargs["threshold_fraction"] = float(section.pop("threshold"))
        if "hysteresis" in section:
            settings_kwargs["hysteresis"] = bool(section.pop("hysteresis"))
        if "break_ratio" in section:
            settings_kwargs["break_ratio"] = float(section.pop("break_ratio"))
        if "ground_height" in section:
            settings_kwargs["ground_height"] = float(section.pop("ground_height"))
        if "init_pos_offset" in section:
            settings_kwargs["init_pos_offset"] = np.asarray(section.pop("init_pos_offset"), dtype=float)
        if "init_rot_offset_deg" in section:
            deg = np.asarray(section.pop("init_rot_offset_deg"), dtype=float)
            settings_kwargs["init_rotvec_offset"] = np.radians(deg)
        if "hide_contacts" in section:
            raw = section.pop("hide_contacts")
            if raw == "" or raw is None:
                settings_kwargs["hidden_contacts"] = frozenset()
            else:
                ids = raw if isinstance(raw, list) else [raw]
                settings_kwargs["hidden_contacts"] = frozenset(int(i) for i in ids)
        if "baseline" in section:
            settings_kwargs["baseline_on"] = bool(section.pop("baseline"))
        if "timing" in section:
            settings_kwargs["timing_in_csv"] = bool(section.pop("timing"))
        if "fd_eps" in section:
            settings_kwargs["fd_eps"] = float(section.pop("fd_eps"))
        if section:
            raise ConfigError(f"{path}: unknown [estimator] keys {sorted(section)}")

    try:
        settings = EstimatorSettings(**settings_kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return RunConfig(kind=kind, scenario_params=params, settings=settings)
