"""How storage duration shapes intraday profit"""

from datetime import date
from typing import Iterable, List, Optional, Sequence
import logging

import pandas as pd

from app.models.schemas import BessSpec, ExogenousSeries, FcrStrategy, OrderBookSnapshot, RiConfig
from app.services.fcr_physics import intraday_duration
from app.services.milp_solver import MilpSolver
from app.services.rolling_intrinsic import run_day

logger = logging.getLogger(__name__)

DEFAULT_CAPACITIES = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0)


def study_spec(base: BessSpec, energy_mwh: float) -> BessSpec:
    """Pure intraday battery of the given size: full SoC range, no binding cycle budget"""
    return base.model_copy(update={
        "energy_mwh": energy_mwh,
        "alpha_lo": 0.0,
        "alpha_hi": 1.0,
        "cycles_per_day": 24.0,
    })


def fcr_duration_curve(spec: BessSpec, bids: Optional[Iterable[int]] = None) -> pd.DataFrame:
    """Energy window over residual power for each FCR bid level"""
    levels = list(bids) if bids is not None else list(range(0, spec.max_fcr_bid + 1))
    rows = [{"fcr_bid_mw": x, "duration_h": intraday_duration(spec, x)} for x in levels]
    return pd.DataFrame(rows, columns=["fcr_bid_mw", "duration_h"])


def capacity_sweep(
    snapshots: Sequence[OrderBookSnapshot],
    exogenous: ExogenousSeries,
    days: Sequence[date],
    base: BessSpec,
    ri: RiConfig,
    capacities: Sequence[float] = DEFAULT_CAPACITIES,
) -> pd.DataFrame:
    """Mean daily intraday profit per MW for each energy capacity at fixed power"""
    ri = ri.model_copy(update={"initial_soc_mwh": 0.0, "terminal_soc_mwh": 0.0})
    solver = MilpSolver(ri.milp_backend, ri.milp_gap, ri.milp_max_nodes)
    strategy = FcrStrategy.of(0, 0, 0, 0, 0, 0)
    rows: List[dict] = []
    for energy in capacities:
        spec = study_spec(base, energy)
        profits = [run_day(snapshots, exogenous, strategy, spec, ri, d, solver).pi_idm for d in days]
        per_mw = sum(profits) / len(profits) / spec.power_mw if profits else 0.0
        rows.append({
            "energy_mwh": energy,
            "duration_h": energy / spec.power_mw,
            "pi_idm_per_mw": per_mw,
        })
        logger.info(f"Capacity {energy:g} MWh: {per_mw:.2f} EUR/MW/day over {len(days)} day(s)")
    return pd.DataFrame(rows, columns=["energy_mwh", "duration_h", "pi_idm_per_mw"])
