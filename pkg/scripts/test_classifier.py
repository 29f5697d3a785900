"""Walk-forward tuning, the boosted-tree classifier and model persistence"""

from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.exceptions import ConfigurationError, SchemaMismatchError
from app.models.schemas import ClassifierConfig, FcrStrategy, HyperparameterGrid, Hyperparameters
from app.services.classifier import (
    TrainedModel,
    _fold_matrices,
    anchored_folds,
    candidate_grid,
    decision_accuracy,
    predict,
    sample_candidates,
    tune_and_train,
)
from app.services.gbdt import GradientBoostedTrees
from app.services.strategy_pool import ProfitMatrix

LOW, HIGH = "8-8-8-0-0-0", "8-8-8-8-8-8"
POOL = [FcrStrategy.parse(LOW), FcrStrategy.parse(HIGH)]

SMALL_GRID = HyperparameterGrid(
    learning_rate=[0.1, 0.3],
    min_split_loss=[0.0],
    subsample=[1.0],
    colsample=[1.0],
    max_depth=[2],
    n_estimators=[15],
)


@pytest.fixture
def config():
    return ClassifierConfig(cv_folds=5, cv_validation_days=15, cv_candidates=2, grid=SMALL_GRID)


def separable(n_days: int, seed: int, start: date = date(2024, 1, 1)):
    """Best strategy is LOW exactly when `signal` is positive; no signal falls inside (-0.5, 0.5)"""
    rng = np.random.default_rng(seed)
    days = [start + timedelta(days=k) for k in range(n_days)]
    signal = rng.choice([-1.0, 1.0], size=n_days) * (0.5 + np.abs(rng.normal(size=n_days)))
    features = pd.DataFrame(
        {"signal": signal, "noise_a": rng.normal(size=n_days), "noise_b": rng.uniform(size=n_days)},
        index=days,
    )
    labels = pd.Series(np.where(signal > 0, LOW, HIGH), index=days, name="label")
    values = np.column_stack([np.where(signal > 0, 100.0, 20.0), np.where(signal > 0, 30.0, 90.0)])
    profits = ProfitMatrix.from_array(values, days, [LOW, HIGH])
    return features, labels, profits


# ---------------------------------------------------------------------------
# Folds and candidates
# ---------------------------------------------------------------------------

def test_anchored_folds_are_nested():
    folds = anchored_folds(240, 5, 15)
    assert len(folds) == 5
    assert folds[0][1][0] == 240 - 75
    assert folds[-1][1][-1] == 239
    for (train, val), (next_train, _) in zip(folds, folds[1:]):
        assert train[0] == 0
        assert set(train) < set(next_train)
    for train, val in folds:
        assert len(val) == 15
        assert val[0] == train[-1] + 1


def test_window_too_short_for_folds():
    with pytest.raises(ConfigurationError):
        anchored_folds(74, 5, 15)


def test_first_fold_without_training_days_is_skipped():
    folds = anchored_folds(75, 5, 15)
    assert len(folds) == 4
    assert folds[0][0].tolist() == list(range(15))


def test_candidate_sampling():
    grid = HyperparameterGrid()
    assert len(candidate_grid(grid)) == 3 * 4 * 2 * 2 * 3 * 2
    first = sample_candidates(grid, 20, seed=3)
    assert len(first) == 20
    assert len(set(c.model_dump_json() for c in first)) == 20
    assert first == sample_candidates(grid, 20, seed=3)

    incumbent = Hyperparameters(learning_rate=0.07, n_estimators=100)
    with_incumbent = sample_candidates(grid, 20, seed=3, incumbent=incumbent)
    assert with_incumbent[0] == incumbent
    assert len(with_incumbent) == 21


# ---------------------------------------------------------------------------
# Training and prediction
# ---------------------------------------------------------------------------

def test_separable_dataset_is_learned(config):
    features, labels, profits = separable(160, seed=0)
    train_days = list(labels.index[:120])
    model = tune_and_train(
        features.loc[train_days], labels.loc[train_days], profits.restrict(train_days), config, seed=1, pool=POOL
    )
    held_out = list(labels.index[120:])
    assert decision_accuracy(model, features, labels.loc[held_out]) >= 0.95
    assert model.classes == [LOW, HIGH]
    assert "signal" in model.schema_.names


def test_held_out_profit_is_close_to_the_pool_oracle(config):
    features, labels, profits = separable(160, seed=10)
    train, held = list(labels.index[:120]), list(labels.index[120:])
    model = tune_and_train(
        features.loc[train], labels.loc[train], profits.restrict(train), config, seed=0, pool=POOL
    )
    chosen = model.predict_ids(features.loc[held])
    realized = sum(profits.total.at[d, s] for d, s in zip(held, chosen))
    oracle = profits.total.loc[held].max(axis=1).sum()
    assert realized >= 0.98 * oracle


def test_predictions_stay_in_the_pool(config):
    features, labels, profits = separable(100, seed=2)
    model = tune_and_train(features, labels, profits, config, seed=0, pool=POOL)
    for day in features.index:
        assert predict(model, features.loc[day]) in POOL


def test_single_label_gives_a_constant_model(config):
    features, _, profits = separable(90, seed=4)
    labels = pd.Series(HIGH, index=features.index, name="label")
    model = tune_and_train(features, labels, profits, config, seed=0, pool=POOL)
    assert model.is_constant
    assert {predict(model, features.loc[d]).strategy_id for d in features.index} == {HIGH}
    expected = float(profits.total[HIGH].iloc[-75:].sum())
    assert model.validation_profit == pytest.approx(expected)


def test_constant_features_predict_the_majority(config):
    features, labels, profits = separable(90, seed=5)
    flat = pd.DataFrame(1.0, index=features.index, columns=features.columns)
    model = tune_and_train(flat, labels, profits, config, seed=0, pool=POOL)
    majority = LOW if (labels == LOW).sum() >= (labels == HIGH).sum() else HIGH
    assert predict(model, flat.iloc[0]).strategy_id == majority


def test_folds_filter_features_on_their_own_training_rows(config):
    """A column that only moves in the last validation block is invisible to every fold"""
    features, labels, profits = separable(90, seed=9)
    late = np.zeros(90)
    late[-15:] = np.random.default_rng(9).normal(size=15)
    frame = features.assign(late=late)
    folds = anchored_folds(90, 5, 15)
    for (train, val), (X_train, X_val) in zip(folds, _fold_matrices(frame, folds, config)):
        assert X_train.shape == (len(train), 3)
        assert X_val.shape == (len(val), 3)
    model = tune_and_train(frame, labels, profits, config, seed=0, pool=POOL)
    assert "late" in model.schema_.names


def test_training_is_deterministic(config):
    features, labels, profits = separable(100, seed=6)
    first = tune_and_train(features, labels, profits, config, seed=11, pool=POOL)
    second = tune_and_train(features, labels, profits, config, seed=11, pool=POOL)
    assert first.hyperparameters == second.hyperparameters
    assert first.validation_profit == second.validation_profit
    assert first.predict_ids(features) == second.predict_ids(features)


def test_schema_mismatch_is_a_hard_error(config):
    features, labels, profits = separable(90, seed=7)
    model = tune_and_train(features, labels, profits, config, seed=0, pool=POOL)
    with pytest.raises(SchemaMismatchError):
        predict(model, features.iloc[0], expected_hash="0" * 64)
    with pytest.raises(SchemaMismatchError):
        predict(model, features.iloc[0].drop("signal"))


def test_model_round_trip(config, tmp_path):
    features, labels, profits = separable(90, seed=8)
    model = tune_and_train(features, labels, profits, config, seed=0, pool=POOL)
    path = model.save(str(tmp_path / "model.json"))
    restored = TrainedModel.load(path)
    assert restored.schema_hash == model.schema_hash
    assert restored.hyperparameters == model.hyperparameters
    assert restored.predict_ids(features) == model.predict_ids(features)


def test_corrupt_model_file_rejected(config, tmp_path):
    features, labels, profits = separable(90, seed=9)
    path = tune_and_train(features, labels, profits, config, seed=0, pool=POOL).save(str(tmp_path / "m.json"))
    target = Path(path)
    target.write_text(target.read_text().replace('"signal"', '"signal_renamed"'))
    with pytest.raises(SchemaMismatchError):
        TrainedModel.load(path)


# ---------------------------------------------------------------------------
# Boosted trees
# ---------------------------------------------------------------------------

def test_boosted_trees_fit_a_threshold():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1.0, 1.0, (200, 2))
    y = (X[:, 0] > 0.2).astype(int) + (X[:, 0] > 0.6).astype(int)
    model = GradientBoostedTrees(Hyperparameters(n_estimators=30, max_depth=2, learning_rate=0.3), seed=0).fit(X, y)
    assert model.n_classes == 3
    assert np.mean(model.predict(X) == y) > 0.95
    proba = model.predict_proba(X)
    assert np.allclose(proba.sum(axis=1), 1.0)
    gains = model.split_gains(2)
    assert gains[0] > gains[1]


def test_boosted_trees_serialize():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(80, 3))
    y = (X[:, 1] > 0).astype(int)
    params = Hyperparameters(n_estimators=10, max_depth=3, subsample=0.8, colsample=0.8)
    model = GradientBoostedTrees(params, seed=4).fit(X, y)
    restored = GradientBoostedTrees.from_dict(model.to_dict())
    assert np.allclose(restored.raw_predict(X), model.raw_predict(X))


def test_split_penalty_prunes_trees():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 2))
    y = rng.integers(0, 2, size=60)
    loose = GradientBoostedTrees(Hyperparameters(n_estimators=5, max_depth=3), seed=0).fit(X, y)
    tight = GradientBoostedTrees(Hyperparameters(n_estimators=5, max_depth=3, min_split_loss=1e6), seed=0).fit(X, y)
    assert tight.split_gains(2).sum() == 0.0
    assert loose.split_gains(2).sum() > 0.0
