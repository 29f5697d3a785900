"""FCR activation, SoC envelope, drift and the EFA calendar"""

from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from app.exceptions import DataError, DomainError, IngestionError, StrategyInfeasibleError
from app.models.schemas import BessSpec, FcrStrategy
from app.services.fcr_physics import (
    day_start,
    drift_between,
    efa_block_index,
    efa_blocks,
    energy_drift,
    fcr_activation,
    fcr_revenue,
    intraday_duration,
    power_bounds,
    soc_envelope,
)

from conftest import utc


def test_activation_deadband_linear_and_saturated():
    assert fcr_activation(0.005, 10) == 0.0
    assert fcr_activation(0.1, 10) == pytest.approx(5.0)
    assert fcr_activation(-0.3, 10) == pytest.approx(-10.0)
    assert fcr_activation(0.01, 10) == 0.0


@hyp_settings(max_examples=200)
@given(df=st.floats(-1.0, 1.0), p_bid=st.floats(0.0, 20.0))
def test_activation_is_odd_and_bounded(df, p_bid):
    p = fcr_activation(df, p_bid)
    assert fcr_activation(-df, p_bid) == pytest.approx(-p)
    assert abs(p) <= p_bid + 1e-12


def test_activation_sweep_is_monotone_and_odd():
    grid = np.linspace(-0.5, 0.5, 10_001)
    power = fcr_activation(grid, 8.0)
    assert np.all(np.diff(power) >= 0)
    assert np.array_equal(fcr_activation(-grid, 8.0), -power)
    assert np.all(power[np.abs(grid) <= 0.01] == 0.0)
    assert np.all(np.abs(power) <= 8.0)


def test_envelope_examples(spec):
    assert soc_envelope(spec, 8) == pytest.approx((2.0, 8.0))
    assert soc_envelope(spec, 0) == pytest.approx((0.1, 9.85))
    with pytest.raises(StrategyInfeasibleError):
        soc_envelope(BessSpec(energy_mwh=1.0), 8)


def test_envelope_shrinks_as_fcr_grows(spec):
    envelopes = [soc_envelope(spec, x) for x in range(9)]
    for (lo, hi), (next_lo, next_hi) in zip(envelopes, envelopes[1:]):
        assert lo <= next_lo <= next_hi <= hi
    assert envelopes[-1] == pytest.approx((2.0, 8.0))


def test_power_bounds_and_duration(spec):
    assert power_bounds(spec, 8) == (-2.0, 2.0)
    assert intraday_duration(spec, 8) == pytest.approx(3.0)
    assert intraday_duration(spec, 0) == pytest.approx(0.975)


def test_drift_examples(spec):
    assert energy_drift([0.0] * 90, 10, spec, 0.25) == 0.0
    assert energy_drift([0.1] * 90, 10, spec, 0.25) == pytest.approx(1.1875)
    assert energy_drift([-0.1] * 90, 10, spec, 0.25) == pytest.approx(-5 / 0.95 * 0.25)


def sine_path(k: int, duration_h: float = 0.25, amplitude: float = 0.2, cycles: int = 3) -> np.ndarray:
    """Left-endpoint samples of a frequency deviation that swings through the deadband"""
    t = np.arange(k) * duration_h / k
    return amplitude * np.sin(2 * np.pi * cycles * t / duration_h)


def test_drift_converges_as_sampling_doubles(spec):
    """|D_K - D_2K| falls like 1/K: one Lipschitz term plus one per deadband crossing"""
    ks = [90 * 2**j for j in range(9)]
    drifts = [energy_drift(sine_path(k), 10, spec, 0.25) for k in ks]
    gaps = [abs(a - b) for a, b in zip(drifts, drifts[1:])]
    slope = 10 / 0.2 * 0.2 * 2 * np.pi * 3 / 0.25 / spec.eta_dis
    jumps = 12 * 10 * 0.01 / 0.2 / spec.eta_dis * 0.25
    bound = 1.5 * (slope * 0.25**2 / 2 + jumps)
    for k, gap in zip(ks, gaps):
        assert gap <= bound / k
    assert gaps[-1] < 1e-2


@hyp_settings(max_examples=200)
@given(samples=st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=120), p_bid=st.floats(0.0, 10.0))
def test_drift_of_the_negated_path_is_negated_when_lossless(samples, p_bid):
    lossless = BessSpec(eta_ch=1.0, eta_dis=1.0)
    forward = energy_drift(samples, p_bid, lossless, 0.25)
    assert energy_drift([-s for s in samples], p_bid, lossless, 0.25) == -forward


def test_drift_without_samples(spec):
    with pytest.raises(IngestionError):
        energy_drift([], 10, spec, 0.25)


def test_revenue_examples():
    prices = [10.0] * 6
    assert fcr_revenue(FcrStrategy.of(0, 0, 0, 0, 0, 0), prices) == 0.0
    assert fcr_revenue(FcrStrategy.of(8, 8, 8, 8, 8, 8), prices) == pytest.approx(480.0)
    assert fcr_revenue(FcrStrategy.of(5, 5, 5, 8, 8, 8), [10, 10, 10, 20, 20, 20]) == pytest.approx(630.0)
    with pytest.raises(DataError):
        fcr_revenue(FcrStrategy.of(8, 8, 8, 8, 8, 8), [10.0] * 5)


def test_efa_blocks_partition_the_day():
    day = date(2024, 3, 5)
    blocks = efa_blocks(day)
    assert [b.index for b in blocks] == [1, 2, 3, 4, 5, 6]
    assert blocks[0].start == day_start(day)
    assert blocks[-1].end == day_start(day + timedelta(days=1))
    assert all(a.end == b.start for a, b in zip(blocks, blocks[1:]))
    assert efa_block_index(utc(2024, 3, 5, 3, 59)) == 1
    assert efa_block_index(utc(2024, 3, 5, 4, 0)) == 2
    assert efa_block_index(utc(2024, 3, 5, 23, 45)) == 6


def test_strategy_ids_and_admissibility(spec):
    strategy = FcrStrategy.parse("8-8-8-0-5-0")
    assert strategy.x == (8, 8, 8, 0, 5, 0)
    assert FcrStrategy.parse("(8,8,8,0,5,0)") == strategy
    assert strategy.block_bid(5) == 5
    with pytest.raises(DomainError):
        FcrStrategy.parse("8-8-8")
    with pytest.raises(DomainError):
        FcrStrategy.of(9, 0, 0, 0, 0, 0).check_admissible(spec)
    with pytest.raises(ValueError):
        FcrStrategy.of(-1, 0, 0, 0, 0, 0)


def test_drift_uses_each_blocks_bid(spec, flat_exogenous):
    """Drift across a block boundary weights each side by its own bid"""
    day = date(2024, 3, 5)
    exogenous = flat_exogenous(day, 1, delta_f=0.1)
    strategy = FcrStrategy.of(8, 4, 0, 0, 0, 0)
    drift = drift_between(exogenous, utc(2024, 3, 5, 3), utc(2024, 3, 5, 5), strategy, spec, day)
    expected = 0.5 * 8 * 0.95 * 1.0 + 0.5 * 4 * 0.95 * 1.0
    assert drift == pytest.approx(expected)


def test_drift_is_zero_outside_delivery_day(spec, flat_exogenous):
    day = date(2024, 3, 5)
    exogenous = flat_exogenous(day, 1, delta_f=0.1)
    strategy = FcrStrategy.of(8, 8, 8, 8, 8, 8)
    assert drift_between(exogenous, utc(2024, 3, 4, 19), utc(2024, 3, 4, 23), strategy, spec, day) == 0.0


def test_drift_with_missing_frequency_samples(spec, flat_exogenous):
    day = date(2024, 3, 5)
    exogenous = flat_exogenous(day, 1, delta_f=0.1)
    short = exogenous.model_copy(update={"frequency": exogenous.frequency.iloc[:100]})
    with pytest.raises(IngestionError):
        drift_between(short, utc(2024, 3, 5, 1), utc(2024, 3, 5, 2), FcrStrategy.of(8, 8, 8, 8, 8, 8), spec, day)
