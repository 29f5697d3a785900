"""Feature construction for next-day FCR strategy classification

Base features per delivery day d:
- day-ahead prices per zone and EFA block: mean and std of hourly values (d)
- power forecasts per series and EFA block: mean and std of hourly values (d)
- FCR clearing prices of d-1 per EFA block
- eight calendar features
Interactions multiply block means of the first two groups with the FCR lags.
"""

from datetime import date, timedelta
from hashlib import sha256
from pathlib import Path
from typing import Iterable, List, Optional, Sequence
import logging
import math

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.exceptions import FeatureError
from app.models.schemas import EFA_BLOCKS, EFA_BLOCK_HOURS, ExogenousSeries
from app.services.fcr_physics import day_start

logger = logging.getLogger(__name__)

FEATURE_VERSION = 1
DEFAULT_ZONES = ("DE-LU", "IT-North", "NO2", "SE4")
CALENDAR_FEATURES = (
    "cal_weekday",
    "cal_weekend",
    "cal_day_of_year",
    "cal_trend",
    "cal_year_sin",
    "cal_year_cos",
    "cal_week_sin",
    "cal_week_cos",
)


class FeatureSchema(BaseModel):
    """Ordered feature names kept after filtering"""
    model_config = ConfigDict(frozen=True)

    names: List[str]
    version: int = FEATURE_VERSION

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.names, self.version)


def schema_hash(names: Sequence[str], version: int = FEATURE_VERSION) -> str:
    payload = f"v{version}|" + "|".join(names)
    return sha256(payload.encode("utf-8")).hexdigest()


def base_feature_names(zones: Sequence[str] = DEFAULT_ZONES) -> List[str]:
    names = []
    for zone in zones:
        for k in range(1, EFA_BLOCKS + 1):
            names += [f"daa_{zone}_b{k}_mean", f"daa_{zone}_b{k}_std"]
    for kind in ExogenousSeries.FORECAST_KINDS:
        for k in range(1, EFA_BLOCKS + 1):
            names += [f"ppf_{kind}_b{k}_mean", f"ppf_{kind}_b{k}_std"]
    names += [f"fcr_lag_b{k}" for k in range(1, EFA_BLOCKS + 1)]
    names += list(CALENDAR_FEATURES)
    return names


def _day_hours(frame: pd.DataFrame, column: str, day: date, series: str) -> np.ndarray:
    if column not in frame.columns:
        raise FeatureError(f"{series} has no column {column!r}", day=day, series=f"{series}:{column}")
    start = pd.Timestamp(day_start(day))
    end = start + pd.Timedelta(hours=24)
    values = frame[column].loc[(frame.index >= start) & (frame.index < end)].to_numpy(dtype=float)
    if values.size != 24 or np.isnan(values).any():
        raise FeatureError(
            f"{series} {column!r} has {np.count_nonzero(~np.isnan(values))} of 24 hourly values on {day}",
            day=day,
            series=f"{series}:{column}",
        )
    return values


def _block_stats(hours: np.ndarray) -> List[float]:
    blocks = hours.reshape(EFA_BLOCKS, EFA_BLOCK_HOURS)
    stats = np.column_stack([blocks.mean(axis=1), blocks.std(axis=1)])
    return stats.reshape(-1).tolist()


def calendar_features(day: date, origin: date) -> List[float]:
    weekday = (day.weekday() + 1) % 7  # 0 = Sunday
    doy = day.timetuple().tm_yday
    return [
        float(weekday),
        1.0 if weekday in (0, 6) else 0.0,
        float(doy),
        float((day - origin).days),
        math.sin(2 * math.pi * doy / 365),
        math.cos(2 * math.pi * doy / 365),
        math.sin(2 * math.pi * weekday / 7),
        math.cos(2 * math.pi * weekday / 7),
    ]


def build_features(
    exogenous: ExogenousSeries,
    day: date,
    zones: Sequence[str] = DEFAULT_ZONES,
    origin: Optional[date] = None,
) -> pd.Series:
    """Base feature vector for delivery day `day`"""
    values: List[float] = []
    for zone in zones:
        values += _block_stats(_day_hours(exogenous.daa_prices, zone, day, "daa_prices"))
    for kind in ExogenousSeries.FORECAST_KINDS:
        values += _block_stats(_day_hours(exogenous.forecasts, kind, day, "forecasts"))

    previous = day - timedelta(days=1)
    if previous not in exogenous.fcr_clearing.index:
        raise FeatureError(f"FCR clearing prices missing for {previous}", day=previous, series="fcr_clearing")
    lags = exogenous.fcr_clearing.loc[previous].reindex(range(1, EFA_BLOCKS + 1)).to_numpy(dtype=float)
    if np.isnan(lags).any():
        raise FeatureError(f"FCR clearing prices incomplete for {previous}", day=previous, series="fcr_clearing")
    values += lags.tolist()

    if origin is None:
        known = exogenous.days()
        origin = known[0] if known else day
    values += calendar_features(day, origin)
    return pd.Series(values, index=base_feature_names(zones), name=day)


def feature_matrix(
    exogenous: ExogenousSeries,
    days: Iterable[date],
    zones: Sequence[str] = DEFAULT_ZONES,
    origin: Optional[date] = None,
) -> pd.DataFrame:
    """Base features plus interactions, one row per day"""
    days = list(days)
    if origin is None:
        known = exogenous.days()
        origin = known[0] if known else (days[0] if days else None)
    rows = [build_features(exogenous, d, zones, origin) for d in days]
    base = pd.DataFrame(rows, index=days, columns=base_feature_names(zones))
    return build_interactions(base)


def build_interactions(base: pd.DataFrame) -> pd.DataFrame:
    """Append (block mean x FCR lag) products for the DAA and forecast groups"""
    means = [c for c in base.columns if c.endswith("_mean") and c.startswith(("daa_", "ppf_"))]
    lags = [c for c in base.columns if c.startswith("fcr_lag_")]
    products = {f"{m}*{lag}": base[m].to_numpy() * base[lag].to_numpy() for m in means for lag in lags}
    interactions = pd.DataFrame(products, index=base.index)
    return pd.concat([base, interactions], axis=1)


def select_features(frame: pd.DataFrame, threshold: float = 0.94, max_features: int = 299) -> FeatureSchema:
    """Drop constant columns, then correlated ones, then cap the count

    Columns are scanned in order; a column is dropped when its absolute
    Pearson correlation with an already kept column exceeds the threshold.
    """
    if len(frame) < 2:
        raise FeatureError("feature filtering needs at least two days", series="features")
    values = frame.to_numpy(dtype=float)
    if np.isnan(values).any():
        bad = frame.columns[np.isnan(values).any(axis=0)][0]
        raise FeatureError(f"feature {bad!r} has missing values", series=bad)

    std = values.std(axis=0)
    varying = std > 1e-12 * np.maximum(1.0, np.abs(values).max(axis=0))
    dropped_constant = int((~varying).sum())
    columns = [c for c, keep in zip(frame.columns, varying) if keep]
    if not columns:
        logger.warning("Every feature is constant over the training window")
        return FeatureSchema(names=[])

    z = values[:, varying]
    z = (z - z.mean(axis=0)) / z.std(axis=0)
    corr = np.abs(z.T @ z) / len(z)

    kept: List[int] = []
    for j in range(len(columns)):
        if not kept or corr[j, kept].max() <= threshold:
            kept.append(j)
    names = [columns[j] for j in kept]
    if len(names) > max_features:
        names = names[:max_features]
    logger.debug(
        f"Feature filter: {frame.shape[1]} candidates, {dropped_constant} constant, "
        f"{len(columns) - len(kept)} correlated, {len(names)} kept"
    )
    return FeatureSchema(names=names)


def export_feature_matrix(frame: pd.DataFrame, target: str) -> str:
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = frame.copy()
    out.index = [d.isoformat() for d in out.index]
    out.index.name = "date"
    out.to_csv(path, float_format="%.10g")
    return str(path)
