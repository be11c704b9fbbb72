"""
Configuration management for the ensemble panoptic fusion toolkit.
Loads settings from environment variables with the published defaults.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from dotenv import load_dotenv

from errors import ConfigError, MissingInputError

# Load environment variables from .env file if present
load_dotenv()

METHODS = ("ours", "hungarian", "baseline")
MEASURES = ("predictive_entropy", "mutual_information", "softmax_entropy")
UPSCALE_MODES = ("bilinear", "nearest")


def _env_float(key: str, default: float) -> float:
    return float(os.environ.get(key, str(default)))


def _env_int(key: str, default: int) -> int:
    return int(os.environ.get(key, str(default)))


class Config:
    """Application configuration loaded from environment variables."""

    # Thing fusion (sequential proposal clustering)
    FUSION_IOU_THRESHOLD: float = _env_float("FUSION_IOU_THRESHOLD", 0.6)
    FUSION_MIN_MEMBER_FRACTION: float = _env_float("FUSION_MIN_MEMBER_FRACTION", 0.8)

    # Pruning of the fused map
    PRUNE_MIN_PROB: float = _env_float("PRUNE_MIN_PROB", 0.4)
    PRUNE_MIN_PIXELS: int = _env_int("PRUNE_MIN_PIXELS", 4)

    # Single-pass baseline pruning
    BASELINE_MIN_SCORE: float = _env_float("BASELINE_MIN_SCORE", 0.85)
    BASELINE_MIN_PIXELS: int = _env_int("BASELINE_MIN_PIXELS", 4)

    # Uncertainty-removal sweep
    SWEEP_IOU_THRESHOLD: float = _env_float("SWEEP_IOU_THRESHOLD", 0.2)
    SWEEP_POINTS: int = _env_int("SWEEP_POINTS", 50)
    SWEEP_MAX_REMOVAL: float = _env_float("SWEEP_MAX_REMOVAL", 0.95)

    # Standard PQ matching threshold (uniqueness needs > 0.5)
    EVAL_IOU_THRESHOLD: float = 0.5

    HIST_BINS: int = _env_int("HIST_BINS", 30)
    UPSCALE_MODE: str = os.environ.get("UPSCALE_MODE", "bilinear")
    UNCERTAINTY_MEASURE: str = os.environ.get("UNCERTAINTY_MEASURE", "predictive_entropy")

    # 0 means "use every available core"
    WORKERS: int = _env_int("WORKERS", 0)
    LOG_LEVEL: str = os.environ.get("LOG_LEVEL", "INFO")

    # Chart configuration
    CHART_WIDTH: int = _env_int("CHART_WIDTH", 8)
    CHART_HEIGHT: int = _env_int("CHART_HEIGHT", 6)
    CHART_DPI: int = _env_int("CHART_DPI", 150)

    @classmethod
    def get_workers(cls) -> int:
        """Resolve the worker count, falling back to the available cores."""
        if cls.WORKERS > 0:
            return cls.WORKERS
        return os.cpu_count() or 1

    @classmethod
    def validate(cls) -> list[str]:
        """Validate parameter ranges. Returns list of problems found."""
        problems = []
        for name in ("FUSION_IOU_THRESHOLD", "PRUNE_MIN_PROB", "BASELINE_MIN_SCORE",
                     "SWEEP_IOU_THRESHOLD"):
            value = getattr(cls, name)
            if not 0.0 <= value <= 1.0:
                problems.append(f"{name}={value} outside [0, 1]")
        if not 0.0 < cls.FUSION_MIN_MEMBER_FRACTION <= 1.0:
            problems.append(f"FUSION_MIN_MEMBER_FRACTION={cls.FUSION_MIN_MEMBER_FRACTION} outside (0, 1]")
        if not 0.0 <= cls.SWEEP_MAX_REMOVAL <= 1.0:
            problems.append(f"SWEEP_MAX_REMOVAL={cls.SWEEP_MAX_REMOVAL} outside [0, 1]")
        for name in ("PRUNE_MIN_PIXELS", "BASELINE_MIN_PIXELS", "SWEEP_POINTS", "HIST_BINS"):
            if getattr(cls, name) < 1:
                problems.append(f"{name} must be >= 1")
        if cls.UPSCALE_MODE not in UPSCALE_MODES:
            problems.append(f"UPSCALE_MODE must be one of {UPSCALE_MODES}")
        if cls.UNCERTAINTY_MEASURE not in MEASURES:
            problems.append(f"UNCERTAINTY_MEASURE must be one of {MEASURES}")
        return problems


def min_member_count(fraction: float, sample_count: int) -> int:
    """
    Smallest number of merged proposals a fused instance needs to be kept.

    Uses ceil(fraction * Q); 0.8 of 15 samples gives 12. The product is rounded
    first so float noise (e.g. 0.7 * 10 = 7.000000000000001) does not bump it up.
    """
    return max(1, math.ceil(round(fraction * sample_count, 9)))


@dataclass
class RunConfig:
    """
    Fully resolved settings for one CLI invocation.

    Threshold fields left as None are filled from the method defaults by
    `resolve()`: "ours" uses 0.6/0.8/0.4/4, "baseline" uses 0.85/4 and
    "hungarian" applies no thresholds.
    """

    subcommand: str = "fuse"
    inputs: list[str] = field(default_factory=list)
    output_dir: str = "out"
    method: str = "ours"
    sample_limit: Optional[int] = None
    iou_threshold: Optional[float] = None
    min_member_fraction: Optional[float] = None
    min_prob: Optional[float] = None
    min_pixels: Optional[int] = None
    pruning: bool = True
    measures: list[str] = field(default_factory=list)
    upscale_mode: Optional[str] = None
    sweep_iou_threshold: Optional[float] = None
    sweep_points: Optional[int] = None
    sweep_max_removal: Optional[float] = None
    thresholds: list[float] = field(default_factory=list)
    hist_bins: Optional[int] = None
    reference_seed: Optional[int] = None
    seed: int = 0
    workers: Optional[int] = None
    extra: dict[str, Any] = field(default_factory=dict)

    def resolve(self) -> "RunConfig":
        """Fill unset fields from the method defaults and the environment, then validate."""
        if self.method not in METHODS:
            raise ConfigError(f"Unknown method '{self.method}', expected one of {METHODS}")

        if self.method == "baseline":
            self._default("min_prob", Config.BASELINE_MIN_SCORE)
            self._default("min_pixels", Config.BASELINE_MIN_PIXELS)
        elif self.method == "ours":
            self._default("iou_threshold", Config.FUSION_IOU_THRESHOLD)
            self._default("min_member_fraction", Config.FUSION_MIN_MEMBER_FRACTION)
            self._default("min_prob", Config.PRUNE_MIN_PROB)
            self._default("min_pixels", Config.PRUNE_MIN_PIXELS)
        else:
            # Hungarian fusion runs without thresholds; matching still needs a cost
            self.pruning = False

        self._default("upscale_mode", Config.UPSCALE_MODE)
        self._default("sweep_iou_threshold", Config.SWEEP_IOU_THRESHOLD)
        self._default("sweep_points", Config.SWEEP_POINTS)
        self._default("sweep_max_removal", Config.SWEEP_MAX_REMOVAL)
        self._default("hist_bins", Config.HIST_BINS)
        # None stays in the resolved config; pool_size() picks the core count at run time
        self._default("workers", Config.WORKERS or None)
        if not self.measures:
            self.measures = [Config.UNCERTAINTY_MEASURE]

        problems = self.validate()
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def pool_size(self) -> int:
        """Worker threads to use: the configured count, else the available cores."""
        return self.workers or Config.get_workers()

    def _default(self, name: str, value: Any):
        if getattr(self, name) is None:
            setattr(self, name, value)

    def validate(self) -> list[str]:
        """Check parameter ranges. Returns list of problems found."""
        problems = []
        for name in ("iou_threshold", "min_prob", "sweep_iou_threshold", "sweep_max_removal"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                problems.append(f"{name}={value} outside [0, 1]")
        if self.min_member_fraction is not None and not 0.0 < self.min_member_fraction <= 1.0:
            problems.append(f"min_member_fraction={self.min_member_fraction} outside (0, 1]")
        for name in ("min_pixels", "sweep_points", "hist_bins", "workers", "sample_limit"):
            value = getattr(self, name)
            if value is not None and value < 1:
                problems.append(f"{name} must be >= 1")
        for measure in self.measures:
            if measure not in MEASURES:
                problems.append(f"Unknown measure '{measure}', expected one of {MEASURES}")
        if self.upscale_mode is not None and self.upscale_mode not in UPSCALE_MODES:
            problems.append(f"upscale_mode must be one of {UPSCALE_MODES}")
        return problems

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_sources(
        cls,
        cli_values: dict[str, Any],
        config_file: Optional[str] = None,
    ) -> "RunConfig":
        """
        Merge settings with precedence CLI flags > config file > environment > defaults.

        Args:
            cli_values: Values given on the command line; None means "not given"
            config_file: Optional JSON document with RunConfig field names as keys

        Returns:
            Resolved and validated RunConfig
        """
        known = {f.name for f in fields(cls)}
        merged: dict[str, Any] = {}

        if config_file:
            path = Path(config_file)
            if not path.exists():
                raise MissingInputError(f"Config file not found: {config_file}")
            try:
                file_values = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as e:
                raise ConfigError(f"Config file {config_file} is not valid JSON: {e}") from e
            if not isinstance(file_values, dict):
                raise ConfigError(f"Config file {config_file} must hold a JSON object")
            unknown = set(file_values) - known
            if unknown:
                raise ConfigError(f"Unknown config keys: {', '.join(sorted(unknown))}")
            merged.update(file_values)

        for key, value in cli_values.items():
            if key not in known:
                continue
            # Empty lists and None mean the flag was not given
            if value is None or (isinstance(value, list) and not value):
                continue
            merged[key] = value

        return cls(**merged).resolve()


# Singleton instance
config = Config()
