"""Pipeline configuration: one JSON file, strict schema, CLI overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import VQ3DError
from .evaluation import MetricSpace, MetricThresholds
from .frames import DEFAULT_BLUR_THRESHOLD, DEFAULT_WINDOW_LEN, Aggregation
from .registration import RegistrationMethod


class ConfigError(VQ3DError):
    """Configuration file or override is invalid."""


@dataclass(frozen=True)
class PipelineConfig:
    registration_method: RegistrationMethod = RegistrationMethod.PER_FRAME_MIN
    rotation_weight: float = 1.0  # meters per radian in the alignment error
    min_common: int | None = None  # None = per-method default
    filter_threshold: float | None = None  # None = no reprojection filtering
    aggregation: Aggregation = Aggregation.LAST
    metrics: MetricThresholds = MetricThresholds()
    blur_window_len: int = DEFAULT_WINDOW_LEN
    blur_threshold: float = DEFAULT_BLUR_THRESHOLD
    workers: int = 1
    seed: int = 0

    def replace(self, **kw) -> "PipelineConfig":
        return dataclasses.replace(self, **kw)


_KEYS = {
    "registration_method": "per_frame_min | least_squares_sim3",
    "rotation_weight": "float >= 0",
    "min_common": "int >= 1 or null",
    "filter_threshold": "float > 0 or null",
    "aggregation": "last | average | median",
    "l2_max": "float > 0",
    "angle_max": "float > 0",
    "metric_space": "world | query_frame",
    "blur_window_len": "int >= 1",
    "blur_threshold": "float >= 0",
    "workers": "int >= 1",
    "seed": "int",
}


def _expect(cond: bool, key: str, value) -> None:
    if not cond:
        raise ConfigError(f"config key {key!r}: bad value {value!r} (expected {_KEYS[key]})")


def config_from_dict(doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(_KEYS)
    if unknown:
        raise ConfigError(
            f"unknown config keys {sorted(unknown)}; known keys: {sorted(_KEYS)}"
        )
    cfg = PipelineConfig()
    kw = {}
    if "registration_method" in doc:
        try:
            kw["registration_method"] = RegistrationMethod(doc["registration_method"])
        except ValueError:
            _expect(False, "registration_method", doc["registration_method"])
    if "rotation_weight" in doc:
        v = doc["rotation_weight"]
        _expect(isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0,
                "rotation_weight", v)
        kw["rotation_weight"] = float(v)
    if "min_common" in doc:
        v = doc["min_common"]
        _expect(v is None or (isinstance(v, int) and not isinstance(v, bool) and v >= 1),
                "min_common", v)
        kw["min_common"] = v
    if "filter_threshold" in doc:
        v = doc["filter_threshold"]
        _expect(v is None or (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0),
                "filter_threshold", v)
        kw["filter_threshold"] = None if v is None else float(v)
    if "aggregation" in doc:
        try:
            kw["aggregation"] = Aggregation(doc["aggregation"])
        except ValueError:
            _expect(False, "aggregation", doc["aggregation"])
    metrics = {}
    if "l2_max" in doc:
        v = doc["l2_max"]
        _expect(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0, "l2_max", v)
        metrics["l2_max"] = float(v)
    if "angle_max" in doc:
        v = doc["angle_max"]
        _expect(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0, "angle_max", v)
        metrics["angle_max"] = float(v)
    if "metric_space" in doc:
        try:
            metrics["space"] = MetricSpace(doc["metric_space"])
        except ValueError:
            _expect(False, "metric_space", doc["metric_space"])
    if metrics:
        kw["metrics"] = dataclasses.replace(cfg.metrics, **metrics)
    if "blur_window_len" in doc:
        v = doc["blur_window_len"]
        _expect(isinstance(v, int) and not isinstance(v, bool) and v >= 1, "blur_window_len", v)
        kw["blur_window_len"] = v
    if "blur_threshold" in doc:
        v = doc["blur_threshold"]
        _expect(isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0,
                "blur_threshold", v)
        kw["blur_threshold"] = float(v)
    if "workers" in doc:
        v = doc["workers"]
        _expect(isinstance(v, int) and not isinstance(v, bool) and v >= 1, "workers", v)
        kw["workers"] = v
    if "seed" in doc:
        v = doc["seed"]
        _expect(isinstance(v, int) and not isinstance(v, bool), "seed", v)
        kw["seed"] = v
    return cfg.replace(**kw)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(doc)
