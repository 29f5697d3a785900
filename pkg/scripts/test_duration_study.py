"""Storage duration and intraday profit"""

from datetime import date, timedelta

import numpy as np
import pytest

from app.models.schemas import BessSpec, RiConfig
from app.services.duration_study import DEFAULT_CAPACITIES, capacity_sweep, fcr_duration_curve, study_spec
from app.services.market_synthesizer import MarketSynthesizer

FIRST = date(2024, 5, 1)


def sweep(regime: str, capacities):
    snapshots, exogenous = MarketSynthesizer(product_duration_h=1.0, interval_minutes=60).synthesize(
        11, 3, regime, FIRST
    )
    ri = RiConfig(resolve_minutes=60, product_duration_h=1.0)
    days = [FIRST + timedelta(days=1), FIRST + timedelta(days=2)]
    return capacity_sweep(snapshots, exogenous, days, BessSpec(), ri, capacities)


def test_fcr_duration_curve(spec):
    curve = fcr_duration_curve(spec)
    assert list(curve["fcr_bid_mw"]) == list(range(9))
    durations = curve.set_index("fcr_bid_mw")["duration_h"]
    assert durations[0] == pytest.approx(0.975)
    assert durations[4] == pytest.approx(8.0 / 6.0)
    assert durations[8] == pytest.approx(3.0)
    assert durations.is_monotonic_increasing


def test_duration_curve_for_selected_bids(spec):
    assert list(fcr_duration_curve(spec, bids=[2, 6])["fcr_bid_mw"]) == [2, 6]


def test_study_spec_frees_the_soc_range(spec):
    study = study_spec(spec, 40.0)
    assert study.energy_mwh == 40.0
    assert (study.alpha_lo, study.alpha_hi) == (0.0, 1.0)
    assert study.power_mw == spec.power_mw
    assert study.eta_ch == spec.eta_ch


@pytest.mark.slow
def test_sweep_columns_and_sign():
    frame = sweep("block-spread", (10.0, 40.0))
    assert list(frame.columns) == ["energy_mwh", "duration_h", "pi_idm_per_mw"]
    assert list(frame["duration_h"]) == [1.0, 4.0]
    assert (frame["pi_idm_per_mw"] >= 0.0).all()


@pytest.mark.slow
def test_block_spread_profit_is_nondecreasing_and_concave_in_duration():
    values = np.array(sweep("block-spread", DEFAULT_CAPACITIES)["pi_idm_per_mw"])
    assert values[-1] > values[0]
    assert np.all(np.diff(values) >= -1e-6 * values.max())
    assert np.all(np.diff(values, n=2) <= 0.01 * values.max())


@pytest.mark.slow
def test_hourly_zigzag_profit_is_flat_in_duration():
    """An hourly zig-zag is fully served by one hour of storage"""
    values = np.array(sweep("alternating", DEFAULT_CAPACITIES)["pi_idm_per_mw"])
    assert values.min() > 0.0
    assert (values.max() - values.min()) / values.max() < 0.01


@pytest.mark.slow
def test_intraday_profit_never_falls_with_more_energy():
    """Schedules that sit on the SoC bounds still trade on the minimum-trade grid"""
    values = sweep("alternating", (10.0, 10.5, 11.0, 20.0))["pi_idm_per_mw"].tolist()
    assert all(b >= a - 1e-6 * max(values) for a, b in zip(values, values[1:]))
