"""Experiment configuration schema.

Configs are YAML documents validated by pydantic before any compute runs.
Unknown keys are rejected and error messages name the offending field.
"""

from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .fields import GT_SCENES

CONFIG_DIR = Path(__file__).parent / "configs"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _unit_range(value):
    lo, hi = value
    if not (0.0 <= lo <= 1.0 and 0.0 <= hi <= 1.0):
        raise ValueError(f"range {list(value)} must lie within [0, 1]")
    if lo > hi:
        raise ValueError(f"range {list(value)} is inverted (lower bound above upper)")
    return value


def _ordered(value):
    lo, hi = value
    if lo > hi:
        raise ValueError(f"range {list(value)} is inverted (lower bound above upper)")
    return value


class SceneConfig(_Strict):
    name: str = "textured-sphere"

    @field_validator("name")
    @classmethod
    def _known(cls, v):
        if v not in GT_SCENES:
            raise ValueError(f"unknown scene {v!r}; choose from {sorted(GT_SCENES)}")
        return v


class TimestepConfig(_Strict):
    start: tuple[float, float] = (0.7, 0.85)
    end: tuple[float, float] = (0.2, 0.5)
    # fraction of the geometry stage over which the bounds are interpolated
    anneal_fraction: float = Field(0.5, gt=0.0, le=1.0)

    @field_validator("start", "end")
    @classmethod
    def _ranges(cls, v):
        return _unit_range(v)


class CameraConfig(_Strict):
    reference_azimuth: float = 0.0
    reference_elevation: float = 10.0
    default_distance: float = Field(3.8, gt=0.0)
    default_fov: float = Field(20.0, gt=0.0, lt=180.0)
    distance_range: tuple[float, float] = (3.2, 3.5)
    fov_range: tuple[float, float] = (10.0, 20.0)
    elevation_range: tuple[float, float] = (0.0, 30.0)
    fixed_probability: float = Field(0.5, ge=0.0, le=1.0)
    light_angle_max: float = Field(1.0471975511965976, ge=0.0, le=3.141592653589793)
    light_distance_range: tuple[float, float] = (7.5, 10.0)
    view_start: float = Field(45.0, ge=0.0, le=180.0)
    view_end: float = Field(180.0, ge=0.0, le=180.0)
    view_warmup: float = Field(0.5, gt=0.0, le=1.0)

    @field_validator("distance_range", "fov_range", "elevation_range", "light_distance_range")
    @classmethod
    def _ranges(cls, v):
        return _ordered(v)


class PriorConfig(_Strict):
    # relative azimuths covered by the front-biased 2D prior
    front_azimuths: tuple[float, ...] = (-30.0, 0.0, 30.0)
    # azimuth offsets of the components inside each view bucket
    bucket_offsets: tuple[float, ...] = (-15.0, 0.0, 15.0)
    elevations: tuple[float, ...] = (5.0, 25.0)
    # extra (distance, fov) pairs in the 2D prior for the random-intrinsics branch
    intrinsics: tuple[tuple[float, float], ...] = ((3.2, 10.0), (3.5, 20.0), (3.35, 15.0))
    gamma_2d: float = Field(0.05, ge=0.0)
    gamma_3d: float = Field(0.05, ge=0.0)
    gamma_texture: float = Field(0.02, ge=0.0)
    gt_mesh_resolution: int = Field(64, ge=8)


class GeometryConfig(_Strict):
    field_resolutions: tuple[int, ...] = (16, 32, 64)
    init_radius: float = Field(0.2, gt=0.0)
    neus_iters: int = Field(300, ge=0)
    dmtet_iters: int = Field(100, ge=0)
    unfreeze_every: int = Field(100, gt=0)
    samples_per_ray: int = Field(64, ge=16)
    ray_half_range: float = Field(1.0, gt=0.0)
    sharpness_start: float = Field(16.0, gt=0.0)
    sharpness_end: float = Field(256.0, gt=0.0)
    sharpness_double_every: int = Field(50, gt=0)
    lr_sdf: float = Field(0.01, gt=0.0)
    lr_color: float = Field(0.02, gt=0.0)
    lr_tet_sdf: float = Field(0.0005, gt=0.0)
    lr_offset: float = Field(0.0002, gt=0.0)
    lr_texture: float = Field(0.001, gt=0.0)
    mu: float = Field(2.0, ge=0.0)
    cfg_scale: float = Field(7.5, ge=0.0)
    w_sds: float = Field(1.0, ge=0.0)
    w_rgb: float = Field(1.0, ge=0.0)
    w_mask: float = Field(1.0, ge=0.0)
    w_depth: float = Field(0.1, ge=0.0)
    w_normal: float = Field(0.1, ge=0.0)
    tet_resolution: int = Field(32, ge=4)
    tet_extent: float = Field(1.0, gt=0.0, le=2.0)


class TextureConfig(_Strict):
    rounds: int = Field(2, ge=0)
    t_prime: tuple[float, ...] = (0.5, 0.1)
    views: int = Field(16, gt=0)
    inner_steps: int = Field(100, gt=0)
    lr_texture: float = Field(0.001, gt=0.0)
    lr_estimator: float = Field(0.05, ge=0.0)
    estimator_init_var: float = Field(0.0025, gt=0.0)
    cfg_scale: float = Field(1.0, ge=0.0)
    class_weight: float = Field(0.5, ge=0.0, lt=1.0)
    timestep: tuple[float, float] = (0.2, 0.5)
    w_bsd: float = Field(1.0, ge=0.0)
    w_rgb: float = Field(1.0, ge=0.0)

    @field_validator("timestep")
    @classmethod
    def _range(cls, v):
        return _unit_range(v)

    @field_validator("t_prime")
    @classmethod
    def _t_prime(cls, v):
        for x in v:
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"t_prime entry {x} outside [0, 1]")
        return v

    @model_validator(mode="after")
    def _enough_t_prime(self):
        if len(self.t_prime) < self.rounds:
            raise ValueError(f"t_prime lists {len(self.t_prime)} values for {self.rounds} rounds")
        return self


class MetricsConfig(_Strict):
    heldout_views: int = Field(8, gt=0)
    heldout_elevation: float = 10.0
    chamfer_samples: int = Field(10000, gt=0)


class ExperimentConfig(_Strict):
    seed: int = 0
    image_size: int = Field(64, ge=8)
    scene: SceneConfig = SceneConfig()
    camera: CameraConfig = CameraConfig()
    timestep: TimestepConfig = TimestepConfig()
    priors: PriorConfig = PriorConfig()
    geometry: GeometryConfig = GeometryConfig()
    texture: TextureConfig = TextureConfig()
    metrics: MetricsConfig = MetricsConfig()
    checkpoint_every: int = Field(100, gt=0)

    def with_updates(self, **changes):
        """Copy with nested overrides, e.g. ``with_updates(geometry={"mu": 0.0})``."""
        data = self.model_dump()
        for key, val in changes.items():
            if isinstance(val, dict):
                data[key] = {**data[key], **val}
            else:
                data[key] = val
        return ExperimentConfig.model_validate(data)


class ConfigError(ValueError):
    pass


def parse_config(data):
    try:
        return ExperimentConfig.model_validate(data or {})
    except ValidationError as err:
        lines = []
        for e in err.errors():
            where = ".".join(str(p) for p in e["loc"])
            lines.append(f"{where}: {e['msg']}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines)) from None


def load_config(path):
    """Load a YAML config; bare names resolve to bundled configs."""
    p = Path(path)
    if not p.exists() and (CONFIG_DIR / f"{path}.yaml").exists():
        p = CONFIG_DIR / f"{path}.yaml"
    with open(p, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return parse_config(data)


def bundled_configs():
    return sorted(p.stem for p in CONFIG_DIR.glob("*.yaml"))
