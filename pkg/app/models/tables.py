"""
CSV table layouts read and written by the engine

Tables:
- snapshots: one row per resting order per order-book snapshot
- daa_prices / forecasts: hourly exogenous series in long format
- fcr_clearing: FCR auction results per EFA block
- frequency: sampled grid-frequency deviation
- trade_log: fills executed by the rolling intrinsic
- profit_matrix: per (day, strategy) backtest results
"""

SNAPSHOT_COLUMNS = ["timestamp", "product_start", "duration_h", "side", "price", "quantity", "order_id"]
SNAPSHOT_OPTIONAL_COLUMNS = ["qualifier"]

EXOGENOUS_COLUMNS = ["timestamp", "key", "value"]
FCR_CLEARING_COLUMNS = ["date", "efa_block", "price_eur_mw"]
FREQUENCY_COLUMNS = ["timestamp", "delta_f_hz"]

TRADE_LOG_COLUMNS = ["solve_time", "product_start", "side", "price", "mw", "cash_eur"]
PROFIT_MATRIX_COLUMNS = ["date", "strategy_id", "pi_fcr", "pi_idm", "pi_total"]

# Exogenous file names inside a data directory
EXOGENOUS_FILES = {
    "daa_prices": "daa_prices.csv",
    "forecasts": "forecasts.csv",
    "fcr_clearing": "fcr_clearing.csv",
    "frequency": "frequency.csv",
}
SNAPSHOT_FILE = "snapshots.csv"

SIDE_LABELS = {"bid": -1, "ask": 1}
