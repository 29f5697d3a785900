"""Learning-based FCR strategy classifier: walk-forward tuning, training and prediction"""

from datetime import date
from itertools import product
from pathlib import Path
from typing import List, Optional, Sequence, Tuple
import json
import logging

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.exceptions import ConfigurationError, FeatureError, SchemaMismatchError
from app.models.schemas import ClassifierConfig, FcrStrategy, HyperparameterGrid, Hyperparameters
from app.services.features import FeatureSchema, select_features
from app.services.gbdt import GradientBoostedTrees
from app.services.strategy_pool import ProfitMatrix

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class TrainedModel(BaseModel):
    """Fitted classifier over a strategy pool"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pool: List[str]
    classes: List[str]
    hyperparameters: Hyperparameters
    schema_: FeatureSchema
    train_start: Optional[date] = None
    train_end: Optional[date] = None
    seed: int = 0
    booster: Optional[GradientBoostedTrees] = None
    validation_profit: Optional[float] = None
    default_label: Optional[str] = None

    @property
    def schema_hash(self) -> str:
        return self.schema_.schema_hash

    @property
    def is_constant(self) -> bool:
        return self.booster is None

    def predict_ids(self, features: pd.DataFrame) -> List[str]:
        missing = [n for n in self.schema_.names if n not in features.columns]
        if missing:
            raise SchemaMismatchError(
                f"feature schema {self.schema_hash[:12]} needs {len(missing)} column(s) not supplied, "
                f"first {missing[0]!r}"
            )
        if self.booster is None or not self.schema_.names:
            return [self.default_label or self.classes[0]] * len(features)
        X = features[self.schema_.names].to_numpy(dtype=float)
        return [self.classes[i] for i in self.booster.predict(X)]

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "pool": self.pool,
            "classes": self.classes,
            "hyperparameters": self.hyperparameters.model_dump(),
            "schema": {"names": self.schema_.names, "version": self.schema_.version, "hash": self.schema_hash},
            "train_start": self.train_start.isoformat() if self.train_start else None,
            "train_end": self.train_end.isoformat() if self.train_end else None,
            "seed": self.seed,
            "validation_profit": self.validation_profit,
            "default_label": self.default_label,
            "booster": self.booster.to_dict() if self.booster is not None else None,
        }

    def save(self, target: str) -> str:
        path = Path(target)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True))
        return str(path)

    @classmethod
    def load(cls, source: str) -> "TrainedModel":
        data = json.loads(Path(source).read_text())
        if data.get("format_version") != MODEL_FORMAT_VERSION:
            raise SchemaMismatchError(f"unsupported model format {data.get('format_version')!r} in {source}")
        schema = FeatureSchema(names=data["schema"]["names"], version=data["schema"]["version"])
        if schema.schema_hash != data["schema"]["hash"]:
            raise SchemaMismatchError(f"model {source} has a corrupt feature schema")
        return cls(
            pool=data["pool"],
            classes=data["classes"],
            hyperparameters=Hyperparameters(**data["hyperparameters"]),
            schema_=schema,
            train_start=date.fromisoformat(data["train_start"]) if data["train_start"] else None,
            train_end=date.fromisoformat(data["train_end"]) if data["train_end"] else None,
            seed=data["seed"],
            validation_profit=data["validation_profit"],
            default_label=data.get("default_label"),
            booster=GradientBoostedTrees.from_dict(data["booster"]) if data["booster"] else None,
        )


# ---------------------------------------------------------------------------
# Walk-forward tuning
# ---------------------------------------------------------------------------

def anchored_folds(n_days: int, folds: int = 5, validation_days: int = 15) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Expanding-window folds validating on consecutive blocks at the end of the window

    Every training set starts at day 0 and ends right before its
    validation block. Folds with an empty training set are skipped.
    """
    needed = folds * validation_days
    if n_days < needed:
        raise ConfigurationError(
            f"training window of {n_days} days is shorter than {folds} x {validation_days} validation days"
        )
    first_val = n_days - needed
    result = []
    for k in range(folds):
        start = first_val + k * validation_days
        train = np.arange(0, start)
        val = np.arange(start, start + validation_days)
        if train.size == 0:
            logger.warning(f"Fold {k + 1} has no training days and is skipped")
            continue
        result.append((train, val))
    return result


def candidate_grid(grid: HyperparameterGrid) -> List[Hyperparameters]:
    return [
        Hyperparameters(
            learning_rate=lr,
            min_split_loss=gamma,
            subsample=sub,
            colsample=col,
            max_depth=depth,
            n_estimators=trees,
        )
        for lr, gamma, sub, col, depth, trees in product(
            grid.learning_rate, grid.min_split_loss, grid.subsample, grid.colsample, grid.max_depth, grid.n_estimators
        )
    ]


def sample_candidates(
    grid: HyperparameterGrid, count: int, seed: int, incumbent: Optional[Hyperparameters] = None
) -> List[Hyperparameters]:
    """The incumbent (if any) followed by `count` grid points drawn without replacement"""
    pool = candidate_grid(grid)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=min(count, len(pool)), replace=False)
    sampled = [pool[i] for i in sorted(picks)]
    if incumbent is not None:
        sampled = [incumbent] + [c for c in sampled if c != incumbent]
    return sampled


def _fit(X: np.ndarray, y: np.ndarray, n_classes: int, params: Hyperparameters, bins: int, seed: int):
    if len(np.unique(y)) < 2 or X.shape[1] == 0:
        return None
    return GradientBoostedTrees(params, n_bins=bins, seed=seed).fit(X, y, n_classes)


def _decide(booster, X: np.ndarray, y_train: np.ndarray) -> np.ndarray:
    if booster is None:
        return np.full(X.shape[0], np.bincount(y_train).argmax() if y_train.size else 0)
    return booster.predict(X)


def _fold_matrices(
    frame: pd.DataFrame, folds: Sequence[Tuple[np.ndarray, np.ndarray]], config: ClassifierConfig
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Training and validation matrices per fold, filtered on the fold's training rows only"""
    result = []
    for train_idx, val_idx in folds:
        train = frame.iloc[train_idx]
        names = (
            select_features(train, config.correlation_threshold, config.max_features).names
            if len(train_idx) >= 2
            else []
        )
        result.append((
            train[names].to_numpy(dtype=float),
            frame.iloc[val_idx][names].to_numpy(dtype=float),
        ))
    return result


def tune_and_train(
    features: pd.DataFrame,
    labels: pd.Series,
    profits: ProfitMatrix,
    config: ClassifierConfig,
    seed: int = 0,
    incumbent: Optional[Hyperparameters] = None,
    pool: Optional[Sequence[FcrStrategy]] = None,
) -> TrainedModel:
    """Pick hyperparameters by summed validation profit, then refit on the whole window

    Each fold filters features on its own training rows; the refit filters
    on the whole window.
    `features` rows, `labels` and `profits` must share the training days.
    `profits` columns are the pool strategies in catalogue order.
    """
    days = list(labels.index)
    missing = [d for d in days if d not in features.index]
    if missing:
        raise FeatureError(f"no features for training day {missing[0]}", day=missing[0], series="features")
    pool_ids = [s.strategy_id for s in pool] if pool is not None else profits.strategy_ids
    classes = [s for s in pool_ids if s in set(labels)]
    if not classes:
        raise ConfigurationError("training labels are empty")

    frame = features.loc[days]
    folds = anchored_folds(len(days), config.cv_folds, config.cv_validation_days)
    schema = select_features(frame, config.correlation_threshold, config.max_features)
    X = frame[schema.names].to_numpy(dtype=float)
    index = {s: i for i, s in enumerate(classes)}
    y = labels.map(index).to_numpy(dtype=int)
    pool_profit = profits.total.loc[days, classes].to_numpy(dtype=float)
    window = (days[0], days[-1])

    if len(classes) == 1:
        logger.info(f"Single label {classes[0]} in window {window[0]}..{window[1]}: constant model")
        return TrainedModel(
            pool=pool_ids,
            classes=classes,
            hyperparameters=incumbent or Hyperparameters(),
            schema_=schema,
            train_start=window[0],
            train_end=window[1],
            seed=seed,
            validation_profit=float(sum(pool_profit[val, 0].sum() for _, val in folds)),
        )

    candidates = sample_candidates(config.grid, config.cv_candidates, seed, incumbent)
    matrices = _fold_matrices(frame, folds, config)
    best_params, best_score = None, -np.inf
    for params in candidates:
        score = 0.0
        for (train_idx, val_idx), (X_train, X_val) in zip(folds, matrices):
            booster = _fit(X_train, y[train_idx], len(classes), params, config.histogram_bins, seed)
            chosen = _decide(booster, X_val, y[train_idx])
            score += float(pool_profit[val_idx, chosen].sum())
        if score > best_score + 1e-9:
            best_params, best_score = params, score

    booster = _fit(X, y, len(classes), best_params, config.histogram_bins, seed)
    logger.debug(
        f"Tuned over {len(candidates)} candidates x {len(folds)} folds: validation profit {best_score:.2f} EUR "
        f"with {best_params.model_dump()}"
    )
    return TrainedModel(
        pool=pool_ids,
        classes=classes,
        hyperparameters=best_params,
        schema_=schema,
        train_start=window[0],
        train_end=window[1],
        seed=seed,
        booster=booster,
        validation_profit=best_score,
        default_label=classes[int(np.bincount(y).argmax())],
    )


def predict(model: TrainedModel, features: pd.Series, expected_hash: Optional[str] = None) -> FcrStrategy:
    """Strategy decision for one day's feature row"""
    if expected_hash is not None and expected_hash != model.schema_hash:
        raise SchemaMismatchError(
            f"feature schema {expected_hash[:12]} does not match the model's {model.schema_hash[:12]}"
        )
    row = features.to_frame().T if isinstance(features, pd.Series) else features
    return FcrStrategy.parse(model.predict_ids(row)[0])


def decision_accuracy(model: TrainedModel, features: pd.DataFrame, labels: pd.Series) -> float:
    if not len(labels):
        return 0.0
    predicted = model.predict_ids(features.loc[list(labels.index)])
    return float(np.mean([p == t for p, t in zip(predicted, labels)]))
