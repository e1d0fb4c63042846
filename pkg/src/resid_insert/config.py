"""Experiment configuration: presets, the ``key = value`` file format and protocol checks."""

from __future__ import annotations

import configparser
import dataclasses
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

from .agent import AgentConfig, TaskSetup
from .contact import ComplianceParams, SlotGeometry
from .vision import CameraModel

SEED_ENV = "RESID_INSERT_SEED"
BASELINES = ("ours", "baseline1", "baseline2", "baseline3", "baseline4")
ABLATIONS = ("full", "no_vision", "no_rl", "random_rl", "no_probe")
ABLATION_STEPS = 10
ABLATION_ERROR = (0.002, 0.003)
COMPARISON_STEP_CEILING = 500


class ConfigError(ValueError):
    pass


# geometry and camera noise per scenario; everything else is shared
SCENARIOS: Dict[str, Dict[str, Any]] = {
    "ram_slot": dict(
        length=0.120, width=0.0052, depth=0.005, ram_length=0.1198, ram_width=0.0050,
    ),
    "ssd_slot": dict(
        length=0.0224, width=0.0012, depth=0.004, ram_length=0.0222, ram_width=0.0010,
        chamfer=0.002, end_chamfer=0.0003,
    ),
}


@dataclass(frozen=True)
class CameraNoise:
    accurate_pixel_sigma: float = 0.3
    accurate_depth_sigma: float = 0.0005
    rough_pixel_sigma: float = 1.0
    rough_depth_sigma: float = 0.0005


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "ram_slot"
    trials: int = 200
    max_steps: int = ABLATION_STEPS
    initial_error_range: Tuple[float, float] = ABLATION_ERROR
    board_offset_range: Tuple[float, float] = (0.010, 0.030)
    baseline: str = "ours"
    seed: int = 0
    train_episodes: int = 500
    train_max_steps: int = 50
    blind_trials: int = 20
    workers: int = 1
    start_height: float = 0.0005
    descent_step: float = 0.001
    spiral_pitch: Optional[float] = None
    spiral_angular_step: float = math.pi / 4
    spiral_press_force: float = 10.0
    agent: AgentConfig = field(default_factory=AgentConfig)
    compliance: ComplianceParams = field(default_factory=ComplianceParams)
    geometry: SlotGeometry = field(default_factory=SlotGeometry)
    camera: CameraNoise = field(default_factory=CameraNoise)

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {sorted(SCENARIOS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.max_steps < 1 or self.train_max_steps < 1:
            raise ConfigError("step limits must be >= 1")
        if self.train_episodes < 1:
            raise ConfigError("train_episodes must be >= 1")
        if self.blind_trials < 1:
            raise ConfigError("blind_trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for name in ("initial_error_range", "board_offset_range"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 <= low <= high")
        if self.baseline not in BASELINES:
            raise ConfigError(f"unknown baseline {self.baseline!r}; choose from {', '.join(BASELINES)}")
        if self.spiral_pitch is not None and self.spiral_pitch <= 0.0:
            raise ConfigError("spiral_pitch must be positive")
        if self.descent_step <= 0.0:
            raise ConfigError("descent_step must be positive")
        if self.start_height < 0.0:
            raise ConfigError("start_height must be non-negative")

    @property
    def pitch(self) -> float:
        return self.geometry.clearance if self.spiral_pitch is None else self.spiral_pitch

    def task(self) -> TaskSetup:
        cam = self.camera
        return TaskSetup(
            geometry=self.geometry,
            compliance=self.compliance,
            accurate_camera=CameraModel(
                pixel_noise_sigma=cam.accurate_pixel_sigma, depth_noise_sigma=cam.accurate_depth_sigma
            ),
            rough_camera=CameraModel(
                pixel_noise_sigma=cam.rough_pixel_sigma, depth_noise_sigma=cam.rough_depth_sigma
            ),
            start_height=self.start_height,
        )

    def without_noise(self) -> "ExperimentConfig":
        return replace(
            self,
            compliance=replace(self.compliance, noise_enabled=False),
            camera=CameraNoise(0.0, 0.0, 0.0, 0.0),
        )


def preset(name: str = "ram_slot") -> ExperimentConfig:
    if name == "default":
        name = "ram_slot"
    if name not in SCENARIOS:
        raise ConfigError(f"unknown preset {name!r}")
    return ExperimentConfig(scenario=name, geometry=SlotGeometry(**SCENARIOS[name]))


# ---------------------------------------------------------------------------
# protocols


def ablation_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Ablation protocol: 10 steps from a 2-3 mm lateral error."""
    out = replace(cfg, max_steps=ABLATION_STEPS, initial_error_range=ABLATION_ERROR)
    assert out.max_steps == ABLATION_STEPS and out.initial_error_range == ABLATION_ERROR
    return out


def comparison_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Baseline comparison: no initial error and only the safety ceiling on steps."""
    out = replace(cfg, max_steps=COMPARISON_STEP_CEILING, initial_error_range=(0.0, 0.0))
    assert out.max_steps == COMPARISON_STEP_CEILING and out.initial_error_range == (0.0, 0.0)
    return out


# ---------------------------------------------------------------------------
# file format

_SECTIONS = {
    "experiment": None,
    "agent": "agent",
    "compliance": "compliance",
    "geometry": "geometry",
    "camera": "camera",
}


def _convert(raw: str, current: Any, key: str) -> Any:
    try:
        if isinstance(current, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(float(v) for v in raw.split(","))
        if current is None:
            return None if raw.strip().lower() in ("", "none") else float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def _apply(obj: Any, values: Dict[str, str], section: str) -> Any:
    names = {f.name for f in dataclasses.fields(obj)}
    updates = {}
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"unknown key [{section}] {key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            raise ConfigError(f"[{section}] {key} is a section, not a value")
        updates[key] = _convert(raw, current, f"[{section}] {key}")
    try:
        return replace(obj, **updates)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def parse_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Parse ``key = value`` text with ``[section]`` headers on top of ``base``.

    A ``scenario`` key in ``[experiment]`` first swaps in that preset's
    geometry, so later ``[geometry]`` keys refine it.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case (K_trans)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
    cfg = base or preset()
    exp = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    if "scenario" in exp:
        cfg = replace(preset(exp["scenario"].strip()), **{
            f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)
            if f.name not in ("scenario", "geometry")
        })
    for name, attr in _SECTIONS.items():
        if not parser.has_section(name):
            continue
        values = dict(parser[name])
        if attr is None:
            values.pop("scenario", None)
            cfg = _apply(cfg, values, name)
        else:
            cfg = replace(cfg, **{attr: _apply(getattr(cfg, attr), values, name)})
    return cfg


def load_config(path_or_name: str) -> ExperimentConfig:
    """Read a config file, or return a preset when given a preset name."""
    if path_or_name in ("default", *SCENARIOS) and not os.path.exists(path_or_name):
        return preset(path_or_name)
    try:
        with open(path_or_name, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path_or_name}: {exc.strerror}") from None
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` for every scalar field."""

    def fmt(v: Any) -> str:
        if isinstance(v, tuple):
            return ", ".join(repr(float(x)) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = ["[experiment]"]
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if not dataclasses.is_dataclass(v):
            lines.append(f"{f.name} = {fmt(v)}")
    for name, attr in _SECTIONS.items():
        if attr is None:
            continue
        lines += ["", f"[{name}]"]
        obj = getattr(cfg, attr)
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                continue
            lines.append(f"{f.name} = {fmt(v)}")
    return "\n".join(lines) + "\n"


def resolve_seed(cli_seed: Optional[int], cfg_seed: int) -> int:
    """``--seed`` wins over the environment, which wins over the config."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return cfg_seed
