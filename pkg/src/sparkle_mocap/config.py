"""Run configuration: nested dataclasses loaded from JSON with strict key checking."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .sparkle import LossWeights


class ConfigError(ValueError):
    pass


@dataclass
class TemplateParams:
    surface_count: int = 2048
    seed: int = 7


@dataclass
class SensorParams:
    noise_sigma: float = 0.0
    dropout: float = 0.0
    density_ref_dist: float = 10.0
    cull: bool = True
    target_count: int = 256


@dataclass
class SequenceParams:
    frames: int = 20
    keyframe_every: int = 8
    max_angle: float = 1.2
    beta_sigma: float = 0.0
    zone_half_extent: float = 1.5


@dataclass
class LabelParams:
    k: int = 3
    bg_dist: float = 0.25


@dataclass
class EstimatorParams:
    gain: float = 0.5
    trim: float = 0.2
    lambda_s: float = 0.01
    calibrate: bool = True
    orient_passes: int = 3


@dataclass
class FitParams:
    poses: int = 200
    max_angle: float = 1.2
    ridge: float = 1e-8


@dataclass
class SolverParams:
    max_iter: int = 50
    damping_init: float = 1e-3
    tol_cost: float = 1e-10
    fd_step: float = 1e-5
    joint_weight: float = 1.0
    anchor_weight: float = 0.5
    beta_frozen: bool = False
    beta_freeze_conf: float = 0.2


@dataclass
class LossParams:
    l1: float = 1.0
    l2: float = 0.5
    l3: float = 1.0
    l4: float = 1.0
    l5: float = 0.5
    l6: float = 1.0
    l7: float = 0.5

    def weights(self) -> LossWeights:
        return LossWeights(**dataclasses.asdict(self))


@dataclass
class SceneParams:
    persons: int = 0
    zone_min: list = field(default_factory=lambda: [-30.0, -2.0, -50.0])
    zone_max: list = field(default_factory=lambda: [30.0, 3.0, 50.0])
    spacing: float = 4.0
    speed: float = 1.2
    radius: float = 0.4
    min_pts: int = 30
    gate: float = 1.0
    max_miss: int = 5
    match_dist: float = 0.5
    points_per_person: int = 256


@dataclass
class RunConfig:
    seed: int = 0
    template: TemplateParams = field(default_factory=TemplateParams)
    sensor: SensorParams = field(default_factory=SensorParams)
    sequence: SequenceParams = field(default_factory=SequenceParams)
    views: list = field(default_factory=lambda: [[0.0, 0.0, -1.0]])
    occlusion_ratios: list = field(default_factory=lambda: [0.0, 0.3, 0.5, 0.7, 0.9])
    labels: LabelParams = field(default_factory=LabelParams)
    estimator: EstimatorParams = field(default_factory=EstimatorParams)
    fit: FitParams = field(default_factory=FitParams)
    solver: SolverParams = field(default_factory=SolverParams)
    loss_weights: LossParams = field(default_factory=LossParams)
    scene: SceneParams = field(default_factory=SceneParams)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def validate(self) -> "RunConfig":
        if self.sequence.frames < 1:
            raise ConfigError("sequence.frames must be >= 1")
        if self.template.surface_count < 256:
            raise ConfigError("template.surface_count must be >= 256")
        if self.sensor.target_count < 1:
            raise ConfigError("sensor.target_count must be >= 1")
        if not 0 <= self.sensor.dropout < 1:
            raise ConfigError("sensor.dropout must lie in [0, 1)")
        if not self.views:
            raise ConfigError("at least one view is required")
        for v in self.views:
            if len(v) != 3 or abs(sum(x * x for x in v) ** 0.5 - 1.0) > 1e-6:
                raise ConfigError(f"view direction {v!r} is not a unit 3-vector")
        for r in self.occlusion_ratios:
            if not 0 <= r <= 1:
                raise ConfigError(f"occlusion ratio {r!r} outside [0, 1]")
        if self.labels.k < 1:
            raise ConfigError("labels.k must be >= 1")
        if self.estimator.orient_passes < 0:
            raise ConfigError("estimator.orient_passes must be >= 0")
        if self.fit.poses < 1:
            raise ConfigError("fit.poses must be >= 1")
        if self.sequence.keyframe_every < 1:
            raise ConfigError("sequence.keyframe_every must be >= 1")
        if not 0 < self.sequence.max_angle < 3.14159:
            raise ConfigError("sequence.max_angle must lie in (0, pi)")
        if self.scene.persons < 0:
            raise ConfigError("scene.persons must be >= 0")
        if self.solver.max_iter < 1:
            raise ConfigError("solver.max_iter must be >= 1")
        return self


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = _coerce(default, value, f"{where}.{name}".lstrip("."))
    return cls(**kwargs)


def _coerce(default, value, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return value
    return value


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "").validate()


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
    for k, v in (overrides or {}).items():
        data[k] = v
    return config_from_dict(data)
