# refocus/cli/dependencies.py
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from refocus.config import get_settings
from refocus.core.baselines import LinearBaseline, PersistenceBaseline
from refocus.core.data import (
    Dataset,
    Scaler,
    SplitSpec,
    WindowPair,
    chronological_split,
    load_csv,
    split_windows,
    standardize,
    synth_dataset,
)
from refocus.core.layers import Module
from refocus.core.model import ReFocusModel
from refocus.models.enums import ModelKind, SplitName
from refocus.models.schemas import ExperimentConfig, ReFocusConfig
from refocus.services.storage import StorageService
from refocus.utils import ConfigError, logger
from refocus.utils.helpers import load_json, resolve_seed


def describe_validation_error(e: ValidationError) -> str:
    """One line per problem, each naming the offending key."""
    parts = []
    for err in e.errors():
        key = ".".join(str(p) for p in err.get("loc", ())) or "config"
        parts.append(f"{key}: {err.get('msg', 'invalid value')}")
    return "; ".join(parts)


def load_experiment(path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    raw = load_json(path)
    raw.update(overrides or {})
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        message = describe_validation_error(e)
        logger.error(f"Invalid experiment config {path}: {message}")
        raise ConfigError(f"invalid config {path}: {message}")


def get_seed(flag: Optional[int], exp: Optional[ExperimentConfig] = None, default: int = 2024) -> int:
    return resolve_seed(flag, get_settings().SEED, exp.seed if exp is not None else default)


def get_storage_service(out: Optional[str], exp: Optional[ExperimentConfig] = None) -> StorageService:
    return StorageService(out or (exp.out_dir if exp is not None else None))


@dataclass
class PreparedData:
    dataset: Dataset
    split: SplitSpec
    scaler: Scaler
    train: List[WindowPair]
    val: List[WindowPair]
    test: List[WindowPair]

    def windows(self, name: SplitName) -> List[WindowPair]:
        return {SplitName.TRAIN: self.train, SplitName.VAL: self.val, SplitName.TEST: self.test}[SplitName(name)]


def prepare_data(exp: ExperimentConfig, seed: int) -> PreparedData:
    """Load or generate the series, split chronologically, standardize on train, cut windows."""
    if exp.dataset is not None:
        raw = load_csv(exp.dataset)
    else:
        raw = synth_dataset(exp.synth, np.random.default_rng(seed))
    split = chronological_split(raw.length, exp.ratios, exp.T)
    scaled, scaler = standardize(raw, split)
    train = split_windows(scaled, split, SplitName.TRAIN, exp.T, exp.F, strict=True)
    val = split_windows(scaled, split, SplitName.VAL, exp.T, exp.F, strict=True)
    test = split_windows(scaled, split, SplitName.TEST, exp.T, exp.F)
    logger.info(f"Windows for {raw.name}: train={len(train)} val={len(val)} test={len(test)}")
    return PreparedData(dataset=scaled, split=split, scaler=scaler, train=train, val=val, test=test)


def model_config(exp: ExperimentConfig, channels: int, seed: int) -> ReFocusConfig:
    return exp.refocus_config(channels).model_copy(update={"seed": seed})


def build_model(kind: ModelKind, config: ReFocusConfig) -> Module:
    kind = ModelKind(kind)
    if kind == ModelKind.PERSISTENCE:
        return PersistenceBaseline(config.F)
    if kind == ModelKind.LINEAR:
        return LinearBaseline(config.T, config.F, np.random.default_rng(config.seed), eps=config.eps)
    return ReFocusModel(config)
