"""Experiment configuration: in-code defaults, TOML file, environment, flags."""

import logging
import os
import tomllib
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from errors import ConfigError

logger = logging.getLogger("config")

FAMILIES = ("gnb", "knn", "svm", "cart", "rf", "ann")
STAGES = ("compare", "select", "balance", "outliers")


def derive_seed(master: int, name: str) -> int:
    """Counter-based 64-bit sub-seed for a named task under a master seed."""
    seq = np.random.SeedSequence(
        entropy=int(master), spawn_key=(zlib.crc32(name.encode("utf-8")),)
    )
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def default_grids() -> dict[str, dict[str, list]]:
    """Grids bracketing the tuned optima; SVM stays untuned."""
    return {
        "gnb": {},
        "knn": {"k": [1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23]},
        "svm": {},
        "cart": {"cp": [0.001, 0.005, 0.01, 0.02, 0.05]},
        "rf": {"mtry": [2, 3, 4, 5, 6]},
        "ann": {"size": [1, 3, 5, 7, 9], "decay": [0.0, 0.1, 0.2, 0.5]},
    }


@dataclass
class CvConfig:
    folds: int = 10
    repeats: int = 3


@dataclass
class ForestConfig:
    n_trees: int = 500
    # Forests scored inside CV folds; the refit on all training rows uses n_trees.
    tuning_trees: int = 100
    min_leaf: int = 1


@dataclass
class CartConfig:
    min_split: int = 20
    min_leaf: int = 7


@dataclass
class NetworkConfig:
    max_iter: int = 500
    gtol: float = 1e-5


@dataclass
class SvmConfig:
    C: float = 1.0
    gamma: float | None = None  # None -> 1 / feature count
    tol: float = 1e-3
    max_iter: int | None = None
    cache_mb: int = 256


@dataclass
class RfeConfig:
    sizes: list[int] = field(default_factory=lambda: list(range(1, 11)))
    folds: int = 10
    repeats: int = 1
    n_trees: int = 100


@dataclass
class ExperimentConfig:
    data_path: str | None = None
    seed: int = 42
    out_dir: str = "runs/latest"
    threads: int = 0
    train_fraction: float = 0.8
    stratified: bool = True
    tune_svm: bool = False
    feature_mode: str = "all"
    resample_mode: str = "none"
    outlier_mode: str = "keep"
    cv: CvConfig = field(default_factory=CvConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    cart: CartConfig = field(default_factory=CartConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    rfe: RfeConfig = field(default_factory=RfeConfig)
    grids: dict[str, dict[str, list]] = field(default_factory=default_grids)

    def __post_init__(self) -> None:
        if self.feature_mode not in ("all", "top5"):
            raise ConfigError(f"feature_mode must be all|top5, got {self.feature_mode!r}")
        if self.resample_mode not in ("none", "under", "smote"):
            raise ConfigError(
                f"resample_mode must be none|under|smote, got {self.resample_mode!r}"
            )
        if self.outlier_mode not in ("keep", "drop"):
            raise ConfigError(f"outlier_mode must be keep|drop, got {self.outlier_mode!r}")
        if self.threads < 0:
            raise ConfigError(f"threads must be >= 0, got {self.threads}")
        unknown = set(self.grids) - set(FAMILIES)
        if unknown:
            raise ConfigError(f"grids for unknown families: {sorted(unknown)}")

    @property
    def n_jobs(self) -> int:
        """joblib worker count; 0 means every core."""
        return -1 if self.threads == 0 else self.threads

    def seed_for(self, name: str) -> int:
        return derive_seed(self.seed, name)

    def with_modes(self, **modes: str) -> "ExperimentConfig":
        return replace(self, **modes)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "cv": CvConfig,
    "forest": ForestConfig,
    "cart": CartConfig,
    "network": NetworkConfig,
    "svm": SvmConfig,
    "rfe": RfeConfig,
}


def _build_section(cls: type, values: dict[str, Any], name: str) -> Any:
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    return cls(**values)


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    """Build a config from a nested mapping shaped like the TOML file."""
    data = dict(data)
    run = dict(data.pop("run", {}))
    split = data.pop("split", {})
    if "train_fraction" in split:
        run["train_fraction"] = split["train_fraction"]
    if "stratified" in split:
        run["stratified"] = split["stratified"]

    kwargs: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build_section(cls, data.pop(name), name)

    grids = default_grids()
    for family, grid in data.pop("grids", {}).items():
        grids[family] = {k: list(v) for k, v in grid.items()}
    kwargs["grids"] = grids

    if data:
        raise ConfigError(f"unknown config section(s): {sorted(data)}")

    top = {f.name for f in fields(ExperimentConfig)} - set(_SECTIONS) - {"grids"}
    unknown = set(run) - top
    if unknown:
        raise ConfigError(f"unknown key(s) in [run]: {sorted(unknown)}")
    return ExperimentConfig(**run, **kwargs)


def _env_overrides() -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    if os.getenv("CHURN_DATA"):
        overrides["data_path"] = os.getenv("CHURN_DATA")
    if os.getenv("CHURN_OUT"):
        overrides["out_dir"] = os.getenv("CHURN_OUT")
    for key, env in (("seed", "CHURN_SEED"), ("threads", "CHURN_THREADS")):
        raw = os.getenv(env)
        if raw:
            try:
                overrides[key] = int(raw)
            except ValueError:
                raise ConfigError(f"{env} must be an integer, got {raw!r}") from None
    return overrides


def load_config(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> ExperimentConfig:
    """Defaults < TOML file < CHURN_* environment < explicit overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"invalid TOML in {path}: {e}") from e
        logger.info(f"Loaded config from {path}")

    cfg = config_from_dict(data)
    updates = {**_env_overrides(), **{k: v for k, v in (overrides or {}).items() if v is not None}}
    if updates:
        cfg = replace(cfg, **updates)
    return cfg
