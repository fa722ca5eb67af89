"""Configuration settings and training presets for MSFNet."""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings

from .errors import ConfigurationError
from .schemas import TrainConfig


class RuntimeSettings(BaseSettings):
    """Process-level settings read from the environment or a .env file."""

    log_level: str = Field(default="INFO", alias="MSFNET_LOG_LEVEL")
    checkpoint_dir: str = Field(default="checkpoints", alias="MSFNET_CHECKPOINT_DIR")
    data_dir: str = Field(default="data/random_dot", alias="MSFNET_DATA_DIR")
    eval_workers: int = Field(default=2, alias="MSFNET_EVAL_WORKERS")
    golden_wiring: str = Field(
        default=str(Path(__file__).resolve().parents[2] / "data" / "golden" / "msfnet_wiring_m1.txt"),
        alias="MSFNET_GOLDEN_WIRING",
    )

    class Config:
        env_file = ".env"
        extra = "ignore"


# Desk-scale defaults: everything runs in minutes on one CPU core.
DESK_PRESET: Dict[str, Any] = {
    "width_multiplier": "1/8",
    "height": 64,
    "width": 128,
    "max_displacement": 8,
    "fine_displacement": 4,
    "stack_count": 3,
    "batch_size": 2,
    "iterations": 2000,
    "learning_rate": 1e-3,
    "lr_step_every": 1000,
    "lr_boundaries": [],
}

# Scene Flow schedule: λ = 1e-4 halved every 100k iterations, stopped at 350k.
SCENEFLOW_PRESET: Dict[str, Any] = {
    "width_multiplier": 1.0,
    "height": 384,
    "width": 768,
    "crop_height": 384,
    "crop_width": 768,
    "max_displacement": 40,
    "fine_displacement": 10,
    "stack_count": 3,
    "batch_size": 2,
    "iterations": 350_000,
    "learning_rate": 1e-4,
    "lr_step_every": 100_000,
    "lr_boundaries": [],
    "validate_every": 10_000,
    "checkpoint_every": 10_000,
}

# KITTI 2015 fine-tuning: λ = 2e-5 halved at 20k and 120k, stopped at 140k.
# 160/40 train/validation split of the 200 ground-truth pairs.
KITTI_PRESET: Dict[str, Any] = {
    **SCENEFLOW_PRESET,
    "iterations": 140_000,
    "learning_rate": 2e-5,
    "lr_step_every": None,
    "lr_boundaries": [20_000, 120_000],
}

PRESETS: Dict[str, Dict[str, Any]] = {
    "desk": DESK_PRESET,
    "sceneflow": SCENEFLOW_PRESET,
    "kitti": KITTI_PRESET,
}


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a plain-text key=value file; blank values and comments are skipped."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    values = dotenv_values(path)
    return {key: value for key, value in values.items() if value is not None and value != ""}


def parse_overrides(pairs: Optional[list]) -> Dict[str, str]:
    """Turn ["key=value", ...] into a dict."""
    overrides: Dict[str, str] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigurationError(f"override must be key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def load_train_config(
    path: Optional[Union[str, Path]] = None,
    preset: str = "desk",
    overrides: Optional[Mapping[str, Any]] = None,
) -> TrainConfig:
    """Preset, then file, then overrides; later sources win."""
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")

    merged: Dict[str, Any] = dict(PRESETS[preset])
    if path is not None:
        merged.update(read_config_file(path))
    merged.update(overrides or {})

    unknown = sorted(set(merged) - set(TrainConfig.model_fields))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")

    try:
        return TrainConfig.model_validate(merged)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first.get("loc", ())) or "config"
        raise ConfigurationError(f"{field}: {first.get('msg')}") from e


def dump_config_file(config: TrainConfig, path: Union[str, Path]) -> None:
    """Write a config back out in the key=value form read_config_file accepts."""
    lines = []
    for key, value in config.model_dump(mode="json").items():
        if value is None:
            value = "none"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    Path(path).write_text("\n".join(lines) + "\n")


# Global settings instance
settings = RuntimeSettings()
