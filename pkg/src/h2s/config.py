"""Run configuration for h2s."""

import copy
import hashlib
import json
import logging
from pathlib import Path
from typing import Any

import yaml

from .errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "input": {
        "path": None,
        "format": "csv",  # csv | json | distance
        "labels_path": None,  # per-point labels for distance input
        "dimension": None,  # ambient N, required for distance input
        "scenario": None,  # synthetic scenario instead of a file
    },
    "estimator": {
        "variant": "ADAPTIVE",
        "mcmc_samples": 10_000,
        "tables": None,  # re-derived calibration tables JSON
    },
    "embedding": {
        "dim": 2,
        "alpha": 1.0,
        "beta": 1.0,
        "mds_only": False,
        "starts": 8,
    },
    "inference": {
        "enabled": True,
        "n_resamples": 5_000,
        "alpha_level": 0.05,
        "n_splits": 10,
    },
    "render": {
        "width": 800,
        "height": 800,
        "margin": 40,
        "palette": None,
    },
    "seed": 0,
    "output": {
        "dir": "h2s-out",
    },
    "debug": False,
}

INPUT_FORMATS = ("csv", "json", "distance")

# config sections each stage's output depends on
STAGE_SECTIONS = {
    "fit": ("input", "estimator", "seed"),
    "embed": ("input", "estimator", "seed", "embedding"),
    "infer": ("input", "estimator", "seed", "inference"),
    "render": ("input", "estimator", "seed", "embedding", "inference", "render"),
}


def get_log_path(out_dir: str | Path) -> Path:
    return Path(out_dir) / "h2s.log"


def deep_merge(base: dict, override: dict) -> dict:
    """Deep merge override into base dict."""
    result = copy.deepcopy(base)
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value
    return result


def _canonical_hash(data: Any) -> str:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Config:
    """Merged run configuration: defaults, then a YAML file, then overrides."""

    def __init__(self, path: str | Path | None = None, overrides: dict | None = None):
        self._config = copy.deepcopy(DEFAULT_CONFIG)
        self._path = Path(path) if path is not None else None
        if self._path is not None:
            self.load(self._path)
        if overrides:
            self._config = deep_merge(self._config, overrides)

    def load(self, path: Path):
        """Load configuration from a YAML file."""
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        with open(path) as f:
            try:
                user_config = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ValidationError(f"invalid YAML in {path}: {e}") from e
        if not isinstance(user_config, dict):
            raise ValidationError(f"config file {path} must contain a mapping")
        unknown = set(user_config) - set(DEFAULT_CONFIG)
        if unknown:
            raise ValidationError(f"unknown config sections in {path}: {sorted(unknown)}")
        self._config = deep_merge(DEFAULT_CONFIG, user_config)
        logger.debug(f"Loaded config from {path}")

    def save(self, path: str | Path):
        """Save configuration to a YAML file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.safe_dump(self._config, f, default_flow_style=False, sort_keys=True)

    def get(self, key: str, default: Any = None) -> Any:
        """Get a config value by dot-separated key."""
        keys = key.split(".")
        value = self._config
        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any):
        """Set a config value by dot-separated key."""
        keys = key.split(".")
        config = self._config
        for k in keys[:-1]:
            if k not in config or not isinstance(config[k], dict):
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value

    def to_dict(self) -> dict:
        return copy.deepcopy(self._config)

    def config_hash(self, stage: str | None = None) -> str:
        """SHA-256 of the canonical JSON of the config, or of one stage's sections."""
        if stage is None:
            data = {k: v for k, v in self._config.items() if k not in ("debug", "output")}
        else:
            data = {k: self._config[k] for k in STAGE_SECTIONS[stage]}
        return _canonical_hash(data)

    def validate(self):
        """Check every setting before any computation runs."""

        def fail(key: str, message: str):
            raise ValidationError(f"config {key}: {message}")

        def positive_int(key: str):
            value = self.get(key)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                fail(key, f"must be a positive integer, got {value!r}")

        def nonneg_number(key: str):
            value = self.get(key)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
                fail(key, f"must be a number >= 0, got {value!r}")

        if self.input_format not in INPUT_FORMATS:
            fail("input.format", f"must be one of {INPUT_FORMATS}, got {self.input_format!r}")
        if self.input_path is None and self.scenario is None:
            fail("input.path", "set an input file or input.scenario")
        if self.input_format == "distance" and self.input_path is not None:
            if self.labels_path is None:
                fail("input.labels_path", "distance input needs a per-point label file")
            positive_int("input.dimension")

        from .estimators import Estimator

        if str(self.estimator_variant).upper() not in {e.value for e in Estimator}:
            fail("estimator.variant", f"unknown estimator {self.estimator_variant!r}")
        positive_int("estimator.mcmc_samples")

        if self.embedding_dim not in (2, 3):
            fail("embedding.dim", f"must be 2 or 3, got {self.embedding_dim!r}")
        nonneg_number("embedding.alpha")
        nonneg_number("embedding.beta")
        positive_int("embedding.starts")

        positive_int("inference.n_resamples")
        positive_int("inference.n_splits")
        level = self.alpha_level
        if isinstance(level, bool) or not isinstance(level, (int, float)) or not 0 < level < 1:
            fail("inference.alpha_level", f"must be in (0, 1), got {level!r}")

        for key in ("render.width", "render.height"):
            positive_int(key)
        nonneg_number("render.margin")
        if self.palette is not None and (not isinstance(self.palette, list) or not self.palette):
            fail("render.palette", "must be a nonempty list of colors")

        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            fail("seed", f"must be a nonnegative integer, got {self.seed!r}")

    @property
    def input_path(self) -> str | None:
        return self.get("input.path")

    @property
    def input_format(self) -> str:
        return self.get("input.format", "csv")

    @property
    def labels_path(self) -> str | None:
        return self.get("input.labels_path")

    @property
    def input_dimension(self) -> int | None:
        return self.get("input.dimension")

    @property
    def scenario(self) -> dict | None:
        return self.get("input.scenario")

    @property
    def estimator_variant(self) -> str:
        return self.get("estimator.variant", "ADAPTIVE")

    @property
    def mcmc_samples(self) -> int:
        return self.get("estimator.mcmc_samples", 10_000)

    @property
    def tables_path(self) -> str | None:
        return self.get("estimator.tables")

    @property
    def embedding_dim(self) -> int:
        return self.get("embedding.dim", 2)

    @property
    def alpha(self) -> float:
        return self.get("embedding.alpha", 1.0)

    @property
    def beta(self) -> float:
        return self.get("embedding.beta", 1.0)

    @property
    def mds_only(self) -> bool:
        return self.get("embedding.mds_only", False)

    @property
    def starts(self) -> int:
        return self.get("embedding.starts", 8)

    @property
    def inference_enabled(self) -> bool:
        return self.get("inference.enabled", True)

    @property
    def n_resamples(self) -> int:
        return self.get("inference.n_resamples", 5_000)

    @property
    def alpha_level(self) -> float:
        return self.get("inference.alpha_level", 0.05)

    @property
    def n_splits(self) -> int:
        return self.get("inference.n_splits", 10)

    @property
    def render_width(self) -> int:
        return self.get("render.width", 800)

    @property
    def render_height(self) -> int:
        return self.get("render.height", 800)

    @property
    def render_margin(self) -> int:
        return self.get("render.margin", 40)

    @property
    def palette(self) -> list[str] | None:
        return self.get("render.palette")

    @property
    def seed(self) -> int:
        return self.get("seed", 0)

    @property
    def output_dir(self) -> Path:
        return Path(self.get("output.dir", "h2s-out"))

    @property
    def debug(self) -> bool:
        return self.get("debug", False)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> Config:
    """Build and validate a Config."""
    config = Config(path, overrides)
    config.validate()
    return config
