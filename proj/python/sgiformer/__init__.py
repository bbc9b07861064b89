"""Superpoint-guided 3D instance segmentation on synthetic point clouds."""

from ._core import (
    CheckpointError,
    ConfigError,
    ParseError,
    Trainer,
    default_config,
    evaluate,
    generate_scene,
    gradcheck,
    hungarian,
    normalize_config,
    read_scene,
    superpoints,
    write_scene,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ParseError",
    "Trainer",
    "default_config",
    "evaluate",
    "generate_scene",
    "gradcheck",
    "hungarian",
    "normalize_config",
    "read_scene",
    "superpoints",
    "write_scene",
]
