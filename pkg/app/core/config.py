# FILE 12: config.py
# Purpose: Run configuration: environment defaults, the key=value config file, and the config hash.
# Dependencies: pydantic, python-dotenv

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.core.errors import ConfigError
from app.core.evaluation import DEFAULT_IMPUTERS, BenchmarkConfig, DownstreamConfig
from app.core.meta_imputer import FjMode, resolve_roster, valid_imputer_names

logger = logging.getLogger(__name__)

env_path = Path(__file__).resolve().parent.parent.parent / ".env"
load_dotenv(dotenv_path=env_path)

# Configuration
MIB_SEED = int(os.getenv("MIB_SEED", "42"))
MIB_MISSING_RATE = float(os.getenv("MIB_MISSING_RATE", "0.1"))
MIB_FOLDS = int(os.getenv("MIB_FOLDS", "5"))
MIB_OUTPUT_DIR = os.getenv("MIB_OUTPUT_DIR", "./results")
MIB_RIDGE_EPSILON = float(os.getenv("MIB_RIDGE_EPSILON", "1e-6"))
MIB_SELF_MASK_RATE = float(os.getenv("MIB_SELF_MASK_RATE", "0.1"))
MIB_N_JOBS = int(os.getenv("MIB_N_JOBS", "1"))
MIB_LOG_LEVEL = os.getenv("MIB_LOG_LEVEL", "INFO")

# keys excluded from the hash: they never change results
HASH_EXCLUDE = {"output_dir", "n_jobs"}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    data_path: Optional[str] = None
    target_name: Optional[str] = None
    missing_rate: float = Field(MIB_MISSING_RATE, ge=0.0, le=1.0)
    folds: int = Field(MIB_FOLDS, ge=2)
    seed: int = Field(MIB_SEED, ge=0)
    imputers: List[str] = Field(default_factory=lambda: list(DEFAULT_IMPUTERS))
    hyperparameters: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    output_dir: str = MIB_OUTPUT_DIR
    ridge_epsilon: float = Field(MIB_RIDGE_EPSILON, ge=0.0)
    fj_mode: FjMode = FjMode.ONE_HOT
    self_mask_rate: float = Field(MIB_SELF_MASK_RATE, ge=0.0, le=1.0)
    n_jobs: int = MIB_N_JOBS
    evaluate_downstream: bool = True
    downstream: DownstreamConfig = Field(default_factory=DownstreamConfig)

    @model_validator(mode="after")
    def _check_roster(self):
        resolve_roster(self.imputers, self.hyperparameters)
        return self

    def config_hash(self) -> str:
        payload = self.model_dump(mode="json", exclude=HASH_EXCLUDE)
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def benchmark_config(self) -> BenchmarkConfig:
        try:
            return BenchmarkConfig(
                folds=self.folds,
                rate=self.missing_rate,
                seed=self.seed,
                imputers=self.imputers,
                hyperparameters=self.hyperparameters,
                ridge_epsilon=self.ridge_epsilon,
                fj_mode=self.fj_mode,
                evaluate_downstream=self.evaluate_downstream,
                downstream=self.downstream,
                n_jobs=self.n_jobs,
                dataset=self.data_path or "",
                config_hash=self.config_hash(),
            )
        except ValidationError as e:
            raise ConfigError(f"invalid benchmark configuration: {_describe(e)}") from e


def _describe(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors())


def build_run_config(values: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {_describe(e)}") from e


def _number(key: str, raw: str, kind=float):
    try:
        return kind(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config key '{key}': expected a number, got '{raw}'") from e


def _flag(key: str, raw: str) -> bool:
    lowered = str(raw).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key '{key}': expected true/false, got '{raw}'")


PLAIN_KEYS = {
    "data": ("data_path", str),
    "target": ("target_name", str),
    "rate": ("missing_rate", float),
    "folds": ("folds", int),
    "seed": ("seed", int),
    "out": ("output_dir", str),
    "fj_mode": ("fj_mode", str),
    "ridge_epsilon": ("ridge_epsilon", float),
    "self_mask_rate": ("self_mask_rate", float),
    "n_jobs": ("n_jobs", int),
}


def parse_config_items(items: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """
    Maps config-file keys onto RunConfig fields. Dotted keys carry hyperparameters:
    `<imputer>.<name>` for base imputers and `downstream.<name>` for evaluation models.
    Unknown keys are errors.
    """
    out: Dict[str, Any] = {}
    hyper: Dict[str, Dict[str, float]] = {}
    downstream: Dict[str, Any] = {}
    for key, raw in items.items():
        key = key.strip()
        if raw is None:
            raise ConfigError(f"config key '{key}' has no value")
        raw = raw.strip()
        if key in PLAIN_KEYS:
            field, kind = PLAIN_KEYS[key]
            out[field] = raw if kind is str else _number(key, raw, kind)
        elif key == "imputers":
            out["imputers"] = [n.strip().lower() for n in raw.split(",") if n.strip()]
        elif key == "downstream":
            out["evaluate_downstream"] = _flag(key, raw)
        elif "." in key:
            owner, name = key.split(".", 1)
            if owner == "downstream":
                if name not in DownstreamConfig.model_fields:
                    raise ConfigError(
                        f"unknown downstream key '{name}'; valid keys: {sorted(DownstreamConfig.model_fields)}"
                    )
                downstream[name] = _number(key, raw)
            elif owner in valid_imputer_names():
                hyper.setdefault(owner, {})[name] = _number(key, raw)
            else:
                raise ConfigError(f"unknown imputer '{owner}' in config key '{key}'")
        else:
            raise ConfigError(f"unknown config key '{key}'")
    if hyper:
        out["hyperparameters"] = hyper
    if downstream:
        out["downstream"] = downstream
    return out


def load_config_file(path) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    items = dotenv_values(path)
    logger.debug(f"Config file {path}: {len(items)} keys")
    return parse_config_items(dict(items))


def merge_config(flags: Dict[str, Any], file_values: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Defaults < command-line flags < config file."""
    values = {k: v for k, v in flags.items() if v is not None}
    for key, value in (file_values or {}).items():
        if key in ("hyperparameters", "downstream") and isinstance(values.get(key), dict):
            merged = dict(values[key])
            merged.update(value)
            values[key] = merged
        else:
            values[key] = value
    return build_run_config(values)
