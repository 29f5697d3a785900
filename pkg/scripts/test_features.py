"""Feature vectors, interactions and the correlation filter"""

import math
from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest

from app.exceptions import FeatureError
from app.models.schemas import ExogenousSeries
from app.services.fcr_physics import day_start
from app.services.features import (
    CALENDAR_FEATURES,
    FeatureSchema,
    base_feature_names,
    build_features,
    build_interactions,
    export_feature_matrix,
    feature_matrix,
    schema_hash,
    select_features,
)
from app.services.market_synthesizer import MarketSynthesizer

FIRST = date(2024, 3, 1)


@pytest.fixture
def week(flat_exogenous):
    return flat_exogenous(FIRST, 7)


@pytest.fixture(scope="module")
def synthetic_exogenous():
    _, exogenous = MarketSynthesizer(product_duration_h=1.0, depth=1, interval_minutes=240).synthesize(
        5, 40, "mixed", FIRST
    )
    return exogenous


def test_base_vector_layout(week):
    row = build_features(week, FIRST + timedelta(days=1))
    assert list(row.index) == base_feature_names()
    assert len(row) == 48 + 48 + 6 + 8
    assert list(row.index[-8:]) == list(CALENDAR_FEATURES)


def test_constant_price_gives_flat_block_stats(week):
    row = build_features(week, FIRST + timedelta(days=1))
    for k in range(1, 7):
        assert row[f"daa_DE-LU_b{k}_mean"] == 50.0
        assert row[f"daa_DE-LU_b{k}_std"] == 0.0
        assert row[f"fcr_lag_b{k}"] == 10.0


def test_block_stats_follow_efa_hours(week):
    """Block 2 covers 04:00-08:00 UTC"""
    daa = week.daa_prices.copy()
    day = FIRST + timedelta(days=2)
    hours = pd.date_range(day_start(day), periods=24, freq="h")
    daa.loc[hours[4:8], "NO2"] = [10.0, 20.0, 30.0, 40.0]
    exogenous = week.model_copy(update={"daa_prices": daa})
    row = build_features(exogenous, day)
    assert row["daa_NO2_b2_mean"] == pytest.approx(25.0)
    assert row["daa_NO2_b2_std"] == pytest.approx(np.std([10.0, 20.0, 30.0, 40.0]))
    assert row["daa_NO2_b1_mean"] == 50.0


def test_sunday_calendar(week):
    row = build_features(week, date(2024, 3, 3))
    assert row["cal_weekday"] == 0.0
    assert row["cal_weekend"] == 1.0
    assert row["cal_week_sin"] == pytest.approx(0.0)
    assert row["cal_trend"] == 2.0


def test_day_of_year_encoding(flat_exogenous):
    exogenous = flat_exogenous(date(2024, 3, 30), 3)
    row = build_features(exogenous, date(2024, 3, 31))
    assert row["cal_day_of_year"] == 91.0
    assert row["cal_year_sin"] == pytest.approx(math.sin(2 * math.pi * 91 / 365))
    assert row["cal_year_cos"] == pytest.approx(math.cos(2 * math.pi * 91 / 365))


def test_future_values_never_leak(week):
    """Poisoning everything after the delivery day leaves its features unchanged"""
    day = FIRST + timedelta(days=3)
    clean = build_features(week, day, origin=FIRST)

    cutoff = pd.Timestamp(day_start(day + timedelta(days=1)))
    daa = week.daa_prices.copy()
    daa.loc[daa.index >= cutoff] = 1e6
    forecasts = week.forecasts.copy()
    forecasts.loc[forecasts.index >= cutoff] = np.nan
    fcr = week.fcr_clearing.copy()
    fcr.loc[[d for d in fcr.index if d >= day]] = -1e6
    poisoned = ExogenousSeries(daa_prices=daa, forecasts=forecasts, fcr_clearing=fcr, frequency=week.frequency)

    pd.testing.assert_series_equal(build_features(poisoned, day, origin=FIRST), clean)


def test_missing_zone_names_the_series(week):
    exogenous = week.model_copy(update={"daa_prices": week.daa_prices.drop(columns=["SE4"])})
    with pytest.raises(FeatureError) as excinfo:
        build_features(exogenous, FIRST + timedelta(days=1))
    assert excinfo.value.series == "daa_prices:SE4"


def test_missing_forecast_hours(week):
    forecasts = week.forecasts.copy()
    day = FIRST + timedelta(days=2)
    forecasts.loc[pd.Timestamp(day_start(day)) + pd.Timedelta(hours=5), "solar"] = np.nan
    with pytest.raises(FeatureError) as excinfo:
        build_features(week.model_copy(update={"forecasts": forecasts}), day)
    assert excinfo.value.day == day


def test_missing_fcr_lag(week):
    with pytest.raises(FeatureError) as excinfo:
        build_features(week, FIRST)
    assert excinfo.value.series == "fcr_clearing"


# ---------------------------------------------------------------------------
# Interactions and filtering
# ---------------------------------------------------------------------------

def test_interaction_count(week):
    frame = feature_matrix(week, [FIRST + timedelta(days=k) for k in range(1, 4)])
    assert frame.shape == (3, 110 + 48 * 6)
    assert "daa_DE-LU_b1_mean*fcr_lag_b1" in frame.columns
    assert not any(c.startswith("cal_") and "*" in c for c in frame.columns)


def test_build_interactions_multiplies_means_and_lags():
    base = pd.DataFrame(
        {"daa_X_b1_mean": [2.0, 3.0], "daa_X_b1_std": [1.0, 1.0], "fcr_lag_b1": [5.0, 7.0]},
        index=[FIRST, FIRST + timedelta(days=1)],
    )
    out = build_interactions(base)
    assert list(out.columns) == ["daa_X_b1_mean", "daa_X_b1_std", "fcr_lag_b1", "daa_X_b1_mean*fcr_lag_b1"]
    assert list(out["daa_X_b1_mean*fcr_lag_b1"]) == [10.0, 21.0]


def test_identical_features_keep_one():
    rng = np.random.default_rng(0)
    signal = rng.normal(size=30)
    frame = pd.DataFrame({"a": signal, "b": rng.normal(size=30), "a_copy": signal})
    assert select_features(frame).names == ["a", "b"]


def test_constant_features_are_dropped():
    frame = pd.DataFrame({"flat": [1.0] * 5, "x": [1.0, 2.0, 4.0, 3.0, 5.0]})
    assert select_features(frame).names == ["x"]


def test_constant_lags_reduce_interactions_to_their_base(week):
    """With no FCR lag variation each product is proportional to its base feature"""
    rng = np.random.default_rng(1)
    daa = week.daa_prices + rng.normal(0.0, 5.0, week.daa_prices.shape)
    forecasts = week.forecasts + rng.normal(0.0, 50.0, week.forecasts.shape)
    exogenous = week.model_copy(update={"daa_prices": daa, "forecasts": forecasts})
    frame = feature_matrix(exogenous, [FIRST + timedelta(days=k) for k in range(1, 7)])
    names = select_features(frame, threshold=0.94, max_features=1000).names
    assert not any("*" in n for n in names)
    assert not any(n.startswith("fcr_lag_") for n in names)


def test_feature_count_is_capped(synthetic_exogenous):
    days = [FIRST + timedelta(days=k) for k in range(1, 40)]
    frame = feature_matrix(synthetic_exogenous, days)
    assert frame.shape[1] == 398
    schema = select_features(frame)
    assert 0 < len(schema.names) < 300
    assert len(select_features(frame, max_features=10).names) == 10


def test_filter_rejects_bad_input():
    with pytest.raises(FeatureError):
        select_features(pd.DataFrame({"x": [1.0]}))
    with pytest.raises(FeatureError):
        select_features(pd.DataFrame({"x": [1.0, np.nan, 2.0]}))


def test_schema_hash_depends_on_order_and_version():
    assert FeatureSchema(names=["a", "b"]).schema_hash == schema_hash(["a", "b"])
    assert schema_hash(["a", "b"]) != schema_hash(["b", "a"])
    assert schema_hash(["a", "b"], version=1) != schema_hash(["a", "b"], version=2)


def test_export_feature_matrix(week, tmp_path):
    frame = feature_matrix(week, [FIRST + timedelta(days=1)])
    path = export_feature_matrix(frame, str(tmp_path / "features.csv"))
    restored = pd.read_csv(path, index_col="date")
    assert list(restored.index) == [(FIRST + timedelta(days=1)).isoformat()]
    assert restored.shape[1] == 398
