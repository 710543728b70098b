"""Shared domain types, configuration, and AU-vector arithmetic.

Conventions used across the package:

* An AU intensity vector is a 1-D float array of length ``d`` (17 by
  default), one entry per action unit in :data:`AU_IDS` order, each value
  in ``[0, m]`` after ingestion clamping (``m`` = 5).
* A face image is an ``(H, W, 3)`` float32 array with values in
  ``[-1, 1]`` and ``H == W == image_size``.
* A latent code is a 1-D float32 array of length ``latent_dim``.
* Identity labels are dense integer class indices in ``[0, n)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

import numpy as np

# Action units carried in the conditioning vector, in canonical column order.
AU_IDS = (1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45)
AU_NAMES = tuple(f"AU{n:02d}" for n in AU_IDS)
AU_INDEX = {name: i for i, name in enumerate(AU_NAMES)}

DEFAULT_D = len(AU_IDS)
DEFAULT_MAX_INTENSITY = 5


class AumorphError(Exception):
    """Base class for domain errors raised by this package."""


class ConfigError(AumorphError, ValueError):
    """Invalid configuration key or value."""


class DatasetError(AumorphError, ValueError):
    """Malformed dataset directory, CSV row, or image file."""


class ShapeError(AumorphError, ValueError):
    """Array input with the wrong shape or length."""


class DivergenceError(AumorphError, RuntimeError):
    """Non-finite loss, gradient, or parameter during training."""


class CheckpointError(AumorphError, RuntimeError):
    """Base class for checkpoint load failures."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint file truncated or failed its integrity checksum."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an incompatible format version."""


class CheckpointConfigError(CheckpointError):
    """Checkpoint config hash does not match the active config."""


class EvaluationError(AumorphError, ValueError):
    """Evaluation protocol input error (missing prediction, empty pairs)."""


_GP_MODES = ("at_real", "interpolated")
_ADV_MODES = ("wasserstein", "log_paper")
_ABLATION_FLAGS = ("no_per", "no_id", "no_ssim")


@dataclass(frozen=True)
class TrainConfig:
    """Immutable hyperparameter set; defaults are the published values."""

    d: int = DEFAULT_D
    m: int = DEFAULT_MAX_INTENSITY
    image_size: int = 128
    latent_dim: int = 256
    lambda_au: float = 100.0
    lambda_id: float = 60.0
    lambda_per: float = 20.0
    lambda_rec: float = 100.0
    lambda_gp: float = 20.0
    lr_main: float = 1e-4
    lr_cexp: float = 2e-4
    batch_size: int = 8
    epochs: int = 400
    lr_decay_start_fraction: float = 0.5
    seed: int = 0
    prior_mean: float = 0.0
    prior_std: float = 1.0
    critic_steps: int = 1
    gp_mode: str = "at_real"
    adv_mode: str = "wasserstein"
    ablation: frozenset[str] = field(default_factory=frozenset)

    def to_dict(self) -> dict[str, Any]:
        """JSON-serializable view; round-trips through validate_config."""
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = sorted(v) if isinstance(v, frozenset) else v
        return out

    def with_ablation(self, flags) -> "TrainConfig":
        raw = self.to_dict()
        raw["ablation"] = sorted(flags)
        return validate_config(raw)


_CONFIG_KEYS = tuple(f.name for f in fields(TrainConfig))


def _require_int(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def _require_real(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite, got {value!r}")
    return v


def validate_config(raw: Mapping[str, Any]) -> TrainConfig:
    """Build a TrainConfig from a key-value map, filling defaults.

    Unknown keys, out-of-range values, and batch_size < 2 are rejected
    with the offending key named in the message. Validating the
    ``to_dict()`` of a valid config returns an equal config.
    """
    unknown = sorted(set(raw) - set(_CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    kw: dict[str, Any] = {}
    for key in ("d", "m", "image_size", "latent_dim", "batch_size", "epochs",
                "seed", "critic_steps"):
        if key in raw:
            kw[key] = _require_int(key, raw[key])
    for key in ("lambda_au", "lambda_id", "lambda_per", "lambda_rec",
                "lambda_gp", "lr_main", "lr_cexp", "lr_decay_start_fraction",
                "prior_mean", "prior_std"):
        if key in raw:
            kw[key] = _require_real(key, raw[key])
    if "gp_mode" in raw:
        kw["gp_mode"] = raw["gp_mode"]
    if "adv_mode" in raw:
        kw["adv_mode"] = raw["adv_mode"]
    if "ablation" in raw:
        flags = raw["ablation"]
        if isinstance(flags, str) or not isinstance(flags, (list, tuple, set, frozenset)):
            raise ConfigError("ablation must be a list of flags")
        bad = sorted(set(flags) - set(_ABLATION_FLAGS))
        if bad:
            raise ConfigError(
                f"ablation contains unknown flag(s): {', '.join(bad)}; "
                f"valid flags are {', '.join(_ABLATION_FLAGS)}")
        kw["ablation"] = frozenset(flags)

    cfg = TrainConfig(**kw)

    for key in ("d", "m", "image_size", "latent_dim", "epochs", "critic_steps"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key} must be >= 1, got {getattr(cfg, key)}")
    if cfg.batch_size < 2:
        raise ConfigError("batch_size must be >= 2 "
                          "(target AU sampling permutes within the batch)")
    for key in ("lambda_au", "lambda_id", "lambda_per", "lambda_rec", "lambda_gp"):
        if getattr(cfg, key) < 0:
            raise ConfigError(f"{key} must be >= 0, got {getattr(cfg, key)}")
    for key in ("lr_main", "lr_cexp", "prior_std"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"{key} must be > 0, got {getattr(cfg, key)}")
    if not 0.0 <= cfg.lr_decay_start_fraction <= 1.0:
        raise ConfigError("lr_decay_start_fraction must be in [0, 1], "
                          f"got {cfg.lr_decay_start_fraction}")
    if cfg.gp_mode not in _GP_MODES:
        raise ConfigError(f"gp_mode must be one of {_GP_MODES}, got {cfg.gp_mode!r}")
    if cfg.adv_mode not in _ADV_MODES:
        raise ConfigError(f"adv_mode must be one of {_ADV_MODES}, got {cfg.adv_mode!r}")
    return cfg


def config_hash(config: TrainConfig) -> str:
    """Stable hash of the config contents, used to guard checkpoint resume."""
    payload = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def clamp_au(values, m: int = DEFAULT_MAX_INTENSITY) -> np.ndarray:
    """Clamp raw AU intensities into [0, m] (ingestion rule)."""
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ShapeError("AU intensities must be finite")
    return np.clip(arr, 0.0, float(m))


def validate_au(values, d: int = DEFAULT_D, m: int = DEFAULT_MAX_INTENSITY) -> np.ndarray:
    """Check an AU vector's length, finiteness, and [0, m] range."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != d:
        raise ShapeError(f"AU vector must have length {d}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("AU vector contains non-finite values")
    if arr.min() < 0 or arr.max() > m:
        raise ShapeError(f"AU intensities must lie in [0, {m}]")
    return arr


def au_discretize(u) -> np.ndarray:
    """Round each intensity to the nearest integer level.

    Ties at .5 round half away from zero, so a deterministic level in
    {0, ..., m} comes out of every in-range input.
    """
    arr = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ShapeError("AU vector contains non-finite values")
    return (np.sign(arr) * np.floor(np.abs(arr) + 0.5)).astype(np.int64)


def interpolate_au(u_i, u_t, alpha: float) -> np.ndarray:
    """Linear path point u_i + alpha * (u_t - u_i), exact at the endpoints.

    Entries where u_i == u_t are passed through bitwise so discretized
    levels cannot drift along a degenerate path.
    """
    a = float(alpha)
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    src = np.asarray(u_i, dtype=np.float64)
    dst = np.asarray(u_t, dtype=np.float64)
    if src.shape != dst.shape:
        raise ShapeError(f"AU vectors differ in shape: {src.shape} vs {dst.shape}")
    if a == 0.0:
        return src.copy()
    if a == 1.0:
        return dst.copy()
    return np.where(src == dst, src, (1.0 - a) * src + a * dst)


def validate_image(pixels, image_size: int) -> np.ndarray:
    """Check an (H, W, 3) face image in [-1, 1] at the configured size."""
    arr = np.asarray(pixels, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"face image must be (H, W, 3), got shape {arr.shape}")
    if arr.shape[0] != image_size or arr.shape[1] != image_size:
        raise ShapeError(
            f"face image must be {image_size}x{image_size}, got "
            f"{arr.shape[0]}x{arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("face image contains non-finite values")
    return arr
