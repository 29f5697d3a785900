"""Settings, parameter objects, error types and logging"""

import json
import logging
from datetime import date

import pytest

from app.config import Settings, load_settings
from app.exceptions import (
    BessError,
    BookValidationError,
    ConfigurationError,
    DataError,
    DomainError,
    FeatureError,
    IngestionError,
    SchemaMismatchError,
    StrategyInfeasibleError,
)
from app.models.schemas import BessSpec, RiConfig
from app.services.observability import JSONFormatter, log_context


def test_defaults_match_reference_battery():
    """Default settings describe the 10 MW / 10 MWh battery"""
    spec = Settings().bess_spec()
    assert spec == BessSpec()
    assert spec.max_fcr_bid == 8
    assert Settings().classifier_config().window_days == 240


def test_config_file_then_environment(tmp_path, monkeypatch):
    """Environment variables override the key-value file"""
    config = tmp_path / "desk.env"
    config.write_text("BESS_POWER_MW=20\nBESS_ENERGY_MWH=40\nBESS_POOL_SIZE=2\n")
    settings = load_settings(str(config))
    assert settings.POWER_MW == 20
    assert settings.classifier_config().pool_size == 2

    monkeypatch.setenv("BESS_ENERGY_MWH", "30")
    settings = load_settings(str(config))
    assert settings.bess_spec().energy_mwh == 30
    assert settings.bess_spec().power_mw == 20



def test_book_depth_and_gate_closure_reach_the_backtest(monkeypatch):
    monkeypatch.setenv("BESS_BOOK_DEPTH", "6")
    monkeypatch.setenv("BESS_GATE_CLOSURE_MINUTES", "15")
    ri = load_settings().backtest_config(date(2024, 1, 1), date(2024, 12, 31)).ri
    assert (ri.book_depth, ri.gate_closure_minutes) == (6, 15)
    with pytest.raises(ValueError):
        RiConfig(book_depth=0)

def test_missing_config_file():
    with pytest.raises(ConfigurationError):
        load_settings("/nonexistent/bess.env")


def test_invalid_battery_is_configuration_error(monkeypatch):
    """alpha_lo >= alpha_hi is rejected when BessSpec is built"""
    monkeypatch.setenv("BESS_ALPHA_LO", "0.9")
    monkeypatch.setenv("BESS_ALPHA_HI", "0.5")
    with pytest.raises(ConfigurationError):
        Settings().bess_spec()


def test_unknown_backend_rejected(monkeypatch):
    monkeypatch.setenv("BESS_MILP_BACKEND", "cplex")
    with pytest.raises(ConfigurationError):
        load_settings()


def test_backtest_config_needs_a_span():
    with pytest.raises(ConfigurationError):
        Settings().backtest_config()


def test_backtest_config_from_settings(monkeypatch):
    monkeypatch.setenv("BESS_WINDOW_DAYS", "10")
    monkeypatch.setenv("BESS_BACKTEST_START", "2024-01-01")
    monkeypatch.setenv("BESS_BACKTEST_END", "2024-01-12")
    config = Settings().backtest_config()
    assert config.start == date(2024, 1, 1)
    assert config.oos_days() == [date(2024, 1, 11), date(2024, 1, 12)]
    window = config.training_days(date(2024, 1, 11))
    assert window[0] == date(2024, 1, 1)
    assert window[-1] == date(2024, 1, 10)
    assert config.data_days()[0] == date(2023, 12, 31)


def test_span_without_out_of_sample_day(monkeypatch):
    monkeypatch.setenv("BESS_WINDOW_DAYS", "30")
    with pytest.raises(ConfigurationError):
        Settings().backtest_config(date(2024, 1, 1), date(2024, 1, 10))


def test_product_duration_validated():
    with pytest.raises(ValueError):
        RiConfig(product_duration_h=0.75)


def test_error_hierarchy():
    """Argument and data errors are ValueErrors; all are BessErrors"""
    for cls in (DomainError, ConfigurationError, IngestionError, DataError, FeatureError, StrategyInfeasibleError):
        assert issubclass(cls, ValueError)
        assert issubclass(cls, BessError)
    assert issubclass(BookValidationError, IngestionError)
    assert not issubclass(SchemaMismatchError, ValueError)


def test_ingestion_error_location():
    err = IngestionError("bad price", row=7, path="snapshots.csv")
    assert str(err) == "snapshots.csv:row 7: bad price"
    assert err.row == 7


def test_data_error_names_day_and_series():
    err = DataError("missing", day=date(2024, 1, 2), series="fcr_clearing")
    assert err.day == date(2024, 1, 2)
    assert err.series == "fcr_clearing"


def test_json_log_carries_context():
    """Day and strategy bound by log_context appear on JSON records"""
    record = logging.LogRecord("app.test", logging.INFO, __file__, 1, "solved", None, None)
    with log_context(run_id="r1", day=date(2024, 1, 2), strategy="8-8-8-0-0-0"):
        payload = json.loads(JSONFormatter().format(record))
    assert payload["message"] == "solved"
    assert payload["run_id"] == "r1"
    assert payload["day"] == "2024-01-02"
    assert payload["strategy"] == "8-8-8-0-0-0"

    payload = json.loads(JSONFormatter().format(record))
    assert payload["day"] is None
