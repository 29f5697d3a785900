"""Application configuration"""
from datetime import date
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.exceptions import ConfigurationError


class Settings(BaseSettings):
    """Engine settings

    Precedence: defaults < key-value config file < BESS_* environment variables.
    """

    # App
    APP_NAME: str = "BESS Joint Bidding Engine"
    VERSION: str = "1.0.0"
    ENVIRONMENT: str = "development"
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "text"  # text | json

    # Battery
    POWER_MW: float = 10.0
    ENERGY_MWH: float = 10.0
    ETA_CH: float = 0.95
    ETA_DIS: float = 0.95
    ALPHA_LO: float = 0.01
    ALPHA_HI: float = 0.985
    DEGRADATION_EUR_MWH: float = 3.0
    CYCLES_PER_DAY: float = 2.0
    MIN_TRADE_MW: float = 0.1
    FCR_MAX_SHARE: float = 0.8

    # Market
    PRODUCT_DURATION_H: float = 0.25
    BOOK_DEPTH: int = 4
    GATE_CLOSURE_MINUTES: int = 30
    FREQUENCY_SAMPLING_S: int = 10
    SNAPSHOT_INTERVAL_MINUTES: int = 15

    # Rolling intrinsic
    RESOLVE_MINUTES: int = 1
    TRADING_START_HOUR: int = 19  # on the day before delivery
    INITIAL_SOC_MWH: float = 2.0
    TERMINAL_SOC_MWH: float = 2.0
    MAX_SNAPSHOT_GAP_MINUTES: int = 120

    # Solver
    MILP_BACKEND: str = "branch_and_bound"  # branch_and_bound | highs
    POOL_MILP_BACKEND: str = "highs"
    MILP_GAP: float = 0.0
    MILP_MAX_NODES: int = 100_000

    # Learning
    WINDOW_DAYS: int = 240
    POOL_SIZE: int = 3
    CV_FOLDS: int = 5
    CV_VALIDATION_DAYS: int = 15
    CV_CANDIDATES: int = 20
    CORRELATION_THRESHOLD: float = 0.94
    MAX_FEATURES: int = 299
    LABEL_LAG_DAYS: int = 1
    DAA_ZONES: List[str] = ["DE-LU", "IT-North", "NO2", "SE4"]
    GRID_LEARNING_RATE: List[float] = [0.01, 0.05, 0.1]
    GRID_MIN_SPLIT_LOSS: List[float] = [0.0, 0.5, 1.0, 2.0]
    GRID_SUBSAMPLE: List[float] = [0.8, 1.0]
    GRID_COLSAMPLE: List[float] = [0.8, 1.0]
    GRID_MAX_DEPTH: List[int] = [3, 4, 5]
    GRID_N_ESTIMATORS: List[int] = [200, 400]
    HISTOGRAM_BINS: int = 32

    # Orchestration
    SEED: int = 7
    MAX_WORKERS: int = 1
    DATA_DIR: str = "data"
    OUTPUT_DIR: str = "reports"
    DUMP_INSTANCE_DIR: Optional[str] = None
    CACHE_DIR: Optional[str] = None

    # Backtest span and market source
    BACKTEST_START: Optional[date] = None
    BACKTEST_END: Optional[date] = None
    SYNTHETIC_REGIME: str = "mixed"
    SNAPSHOTS_PATH: Optional[str] = None
    EXOGENOUS_DIR: Optional[str] = None

    model_config = SettingsConfigDict(
        env_prefix="BESS_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    @field_validator("LOG_FORMAT")
    @classmethod
    def _check_log_format(cls, value: str) -> str:
        if value not in ("text", "json"):
            raise ValueError(f"LOG_FORMAT must be 'text' or 'json', got {value!r}")
        return value

    @field_validator("MILP_BACKEND", "POOL_MILP_BACKEND")
    @classmethod
    def _check_backend(cls, value: str) -> str:
        if value not in ("branch_and_bound", "highs"):
            raise ValueError(f"unknown MILP backend {value!r}")
        return value

    def bess_spec(self):
        """Battery parameters as a BessSpec"""
        from app.models.schemas import BessSpec

        return _build(
            BessSpec,
            power_mw=self.POWER_MW,
            energy_mwh=self.ENERGY_MWH,
            eta_ch=self.ETA_CH,
            eta_dis=self.ETA_DIS,
            alpha_lo=self.ALPHA_LO,
            alpha_hi=self.ALPHA_HI,
            degradation_eur_mwh=self.DEGRADATION_EUR_MWH,
            cycles_per_day=self.CYCLES_PER_DAY,
            min_trade_mw=self.MIN_TRADE_MW,
            fcr_max_share=self.FCR_MAX_SHARE,
        )

    def ri_config(self):
        """Rolling intrinsic parameters as an RiConfig"""
        from app.models.schemas import RiConfig

        return _build(
            RiConfig,
            resolve_minutes=self.RESOLVE_MINUTES,
            trading_start_hour=self.TRADING_START_HOUR,
            initial_soc_mwh=self.INITIAL_SOC_MWH,
            terminal_soc_mwh=self.TERMINAL_SOC_MWH,
            product_duration_h=self.PRODUCT_DURATION_H,
            gate_closure_minutes=self.GATE_CLOSURE_MINUTES,
            book_depth=self.BOOK_DEPTH,
            max_snapshot_gap_minutes=self.MAX_SNAPSHOT_GAP_MINUTES,
            milp_backend=self.MILP_BACKEND,
            milp_gap=self.MILP_GAP,
            milp_max_nodes=self.MILP_MAX_NODES,
            dump_instance_dir=self.DUMP_INSTANCE_DIR,
        )

    def classifier_config(self):
        """Walk-forward and boosting parameters as a ClassifierConfig"""
        from app.models.schemas import ClassifierConfig, HyperparameterGrid

        return _build(
            ClassifierConfig,
            window_days=self.WINDOW_DAYS,
            pool_size=self.POOL_SIZE,
            cv_folds=self.CV_FOLDS,
            cv_validation_days=self.CV_VALIDATION_DAYS,
            cv_candidates=self.CV_CANDIDATES,
            correlation_threshold=self.CORRELATION_THRESHOLD,
            max_features=self.MAX_FEATURES,
            label_lag_days=self.LABEL_LAG_DAYS,
            daa_zones=list(self.DAA_ZONES),
            histogram_bins=self.HISTOGRAM_BINS,
            grid=HyperparameterGrid(
                learning_rate=list(self.GRID_LEARNING_RATE),
                min_split_loss=list(self.GRID_MIN_SPLIT_LOSS),
                subsample=list(self.GRID_SUBSAMPLE),
                colsample=list(self.GRID_COLSAMPLE),
                max_depth=list(self.GRID_MAX_DEPTH),
                n_estimators=list(self.GRID_N_ESTIMATORS),
            ),
        )

    def backtest_config(self, start: Optional[date] = None, end: Optional[date] = None):
        """Backtest over [start, end], falling back to BACKTEST_START/BACKTEST_END"""
        from app.models.schemas import BacktestConfig

        start = start or self.BACKTEST_START
        end = end or self.BACKTEST_END
        if start is None or end is None:
            raise ConfigurationError("a backtest needs BACKTEST_START and BACKTEST_END")
        return _build(
            BacktestConfig,
            start=start,
            end=end,
            spec=self.bess_spec(),
            ri=self.ri_config(),
            classifier=self.classifier_config(),
            seed=self.SEED,
            max_workers=self.MAX_WORKERS,
            snapshots_path=self.SNAPSHOTS_PATH,
            exogenous_dir=self.EXOGENOUS_DIR,
            synthetic_regime=self.SYNTHETIC_REGIME,
            cache_dir=self.CACHE_DIR,
        )


def _build(model, **values):
    try:
        return model(**values)
    except ValidationError as e:
        raise ConfigurationError(f"invalid {model.__name__}: {e}") from e


def load_settings(config_file: Optional[str] = None) -> Settings:
    """Load settings, optionally from an explicit key-value config file"""
    if config_file is not None and not Path(config_file).exists():
        raise ConfigurationError(f"config file not found: {config_file}")
    try:
        if config_file is None:
            return Settings()
        return Settings(_env_file=str(config_file))
    except ValidationError as e:
        raise ConfigurationError(f"invalid settings: {e}") from e


settings = Settings()
