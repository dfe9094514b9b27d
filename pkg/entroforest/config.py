from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

try:  # Python 3.11+
    import tomllib  # type: ignore[attr-defined]
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib  # type: ignore[no-redef]

from .errors import ConfigurationError


CONFIG_FILENAME = "entroforest.toml"
ENV_PREFIX = "ENTROFOREST_"


@dataclass
class EntroForestConfig:
    seed: Optional[int] = None
    estimator: Optional[str] = None
    trees: Optional[int] = None
    tests: Optional[int] = None
    min_split: Optional[int] = None
    min_leaf: Optional[int] = None
    max_depth: Optional[int] = None
    kde_lambda: Optional[float] = None
    subsample_size: Optional[int] = None
    log_level: Optional[str] = None


def _load_toml_file(path: Path) -> dict:
    if not path.is_file():
        return {}
    with path.open("rb") as f:
        try:
            return tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc


# (attribute, key in [forest], environment suffix, parser)
_FOREST_FIELDS = (
    ("seed", "seed", "SEED", int),
    ("estimator", "estimator", "ESTIMATOR", str),
    ("trees", "trees", "TREES", int),
    ("tests", "tests", "TESTS", int),
    ("min_split", "min_split", "MIN_SPLIT", int),
    ("min_leaf", "min_leaf", "MIN_LEAF", int),
    ("max_depth", "max_depth", "MAX_DEPTH", int),
    ("kde_lambda", "lambda", "LAMBDA", float),
    ("subsample_size", "subsample_size", "SUBSAMPLE_SIZE", int),
)


def _parse(value: object, parser: Callable[[str], object]) -> Optional[object]:
    try:
        return parser(value)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        return None


def load_config(path: Optional[Path] = None) -> EntroForestConfig:
    """Load EntroForest defaults from entroforest.toml and the environment.

    Precedence (lowest to highest):
      1. entroforest.toml in the current working directory (or `path`)
      2. Environment variables (ENTROFOREST_*)
    Command-line flags still take ultimate precedence in the CLI.
    """

    cfg = EntroForestConfig()

    # 1) File-based config: ./entroforest.toml
    data = _load_toml_file(path or Path.cwd() / CONFIG_FILENAME)

    forest_section = data.get("forest", {})
    if isinstance(forest_section, dict):
        for attr, key, _env, parser in _FOREST_FIELDS:
            if key in forest_section:
                value = _parse(forest_section[key], parser)
                if value is not None:
                    setattr(cfg, attr, value)

    logging_section = data.get("logging", {})
    if isinstance(logging_section, dict) and logging_section.get("level"):
        cfg.log_level = str(logging_section["level"])

    # 2) Environment variables override file
    for attr, _key, env, parser in _FOREST_FIELDS:
        raw = os.getenv(ENV_PREFIX + env)
        if raw:
            value = _parse(raw, parser)
            if value is not None:
                setattr(cfg, attr, value)

    log_level = os.getenv(ENV_PREFIX + "LOG_LEVEL")
    if log_level:
        cfg.log_level = log_level

    return cfg
