"""FCR activation, state-of-charge envelope, energy drift and the EFA calendar"""

from datetime import date, datetime, time, timedelta, timezone
from typing import List, Sequence, Tuple
import logging

import numpy as np

from app.exceptions import DataError, IngestionError, StrategyInfeasibleError
from app.models.schemas import (
    EFA_BLOCK_HOURS,
    EFA_BLOCKS,
    BessSpec,
    EfaBlock,
    ExogenousSeries,
    FcrStrategy,
)

logger = logging.getLogger(__name__)

DEADBAND_HZ = 0.01
FULL_ACTIVATION_HZ = 0.2


def fcr_activation(delta_f, p_bid: float):
    """Power delivered for a frequency deviation (positive = absorbed from the grid)

    Accepts a scalar or an array of deviations.
    """
    df = np.asarray(delta_f, dtype=float)
    power = np.where(
        np.abs(df) <= DEADBAND_HZ,
        0.0,
        np.clip(df / FULL_ACTIVATION_HZ, -1.0, 1.0) * p_bid,
    )
    if power.ndim == 0:
        return float(power)
    return power


def soc_envelope(spec: BessSpec, x_i: float) -> Tuple[float, float]:
    """Admissible stored-energy interval while x_i MW of FCR is committed"""
    lo = max(spec.alpha_lo * spec.energy_mwh, x_i / 4.0)
    hi = min(spec.alpha_hi * spec.energy_mwh, spec.energy_mwh - x_i / 4.0)
    if lo > hi + 1e-12:
        raise StrategyInfeasibleError(
            f"empty SoC envelope for {x_i} MW FCR on a {spec.energy_mwh} MWh battery: [{lo}, {hi}]"
        )
    return lo, hi


def power_bounds(spec: BessSpec, x_i: float) -> Tuple[float, float]:
    """Residual intraday power range after the FCR commitment"""
    residual = spec.power_mw - x_i
    return -residual, residual


def intraday_duration(spec: BessSpec, x_i: float) -> float:
    """Hours of residual power the SoC envelope can absorb: (c_hi - c_lo) / (power - x_i)"""
    lo, hi = soc_envelope(spec, x_i)
    residual = spec.power_mw - x_i
    if residual <= 0:
        return float("inf")
    return (hi - lo) / residual


def energy_drift(samples: Sequence[float], p_bid: float, spec: BessSpec, duration_h: float) -> float:
    """Riemann estimate of the SoC change from FCR activation over an interval

    D = (duration / K) * sum_k P(df_k) * eta(P(df_k)), with eta = eta_ch when
    absorbing and 1 / eta_dis when injecting.
    """
    values = np.asarray(samples, dtype=float)
    if duration_h <= 0 or p_bid == 0:
        return 0.0
    if values.size == 0:
        raise IngestionError(f"no frequency samples for a {duration_h:.4f} h interval")
    power = fcr_activation(values, p_bid)
    weighted = np.where(power > 0, power * spec.eta_ch, power / spec.eta_dis)
    return float(duration_h / values.size * weighted.sum())


def fcr_revenue(strategy: FcrStrategy, clearing: Sequence[float]) -> float:
    """Capacity payment for one day: sum over blocks of price * MW"""
    prices = list(clearing)
    if len(prices) != EFA_BLOCKS or any(p is None or np.isnan(p) for p in prices):
        raise DataError(f"FCR clearing prices must cover all {EFA_BLOCKS} blocks, got {prices}", series="fcr_clearing")
    return float(sum(p * x for p, x in zip(prices, strategy.x)))


# ---------------------------------------------------------------------------
# EFA calendar
# ---------------------------------------------------------------------------

def day_start(day: date) -> datetime:
    return datetime.combine(day, time(0, 0), tzinfo=timezone.utc)


def efa_blocks(day: date) -> List[EfaBlock]:
    start = day_start(day)
    return [
        EfaBlock(
            index=i + 1,
            start=start + timedelta(hours=EFA_BLOCK_HOURS * i),
            end=start + timedelta(hours=EFA_BLOCK_HOURS * (i + 1)),
        )
        for i in range(EFA_BLOCKS)
    ]


def efa_block_index(instant: datetime) -> int:
    """EFA block (1..6) containing instant"""
    instant = instant.astimezone(timezone.utc)
    return instant.hour // EFA_BLOCK_HOURS + 1


def drift_between(
    exogenous: ExogenousSeries,
    start: datetime,
    end: datetime,
    strategy: FcrStrategy,
    spec: BessSpec,
    delivery_day: date,
) -> float:
    """Drift accumulated over [start, end), restricted to the delivery day

    The interval is split at EFA block boundaries so each piece uses its own
    block's bid.
    """
    lo = max(start, day_start(delivery_day))
    hi = min(end, day_start(delivery_day + timedelta(days=1)))
    if hi <= lo or not any(strategy.x):
        return 0.0

    total = 0.0
    cursor = lo
    while cursor < hi:
        block = efa_block_index(cursor)
        block_end = day_start(delivery_day) + timedelta(hours=EFA_BLOCK_HOURS * block)
        piece_end = min(hi, block_end)
        p_bid = strategy.block_bid(block)
        if p_bid > 0:
            samples = exogenous.frequency_segment(cursor, piece_end)
            hours = (piece_end - cursor).total_seconds() / 3600.0
            expected = int(round((piece_end - cursor).total_seconds() / exogenous.frequency_step_seconds()))
            if samples.size < expected:
                raise IngestionError(
                    f"frequency series has {samples.size} of {expected} samples in "
                    f"[{cursor.isoformat()}, {piece_end.isoformat()})"
                )
            total += energy_drift(samples, p_bid, spec, hours)
        cursor = piece_end
    return total
