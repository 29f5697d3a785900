"""Report files for a finished backtest"""

from pathlib import Path
from typing import Dict, List, Optional
import json
import logging

import pandas as pd

from app.config import settings
from app.services.backtest import BacktestRun, decisions_frame
from app.services.benchmarks import (
    ONLY_FCR,
    ONLY_IDM,
    STATIC,
    BenchmarkReport,
    benchmark_decisions,
    evaluate_policies,
)
from app.services.strategy_pool import ProfitMatrix, best_counts

logger = logging.getLogger(__name__)

REPORT_FILES = (
    "strategies.csv",
    "benchmarks.csv",
    "cumulative.csv",
    "weekly_normalized.csv",
    "run_manifest.json",
)
PROFIT_FILE = "profit_matrix.csv"
DECISIONS_FILE = "decisions.csv"


def strategy_table(profits: ProfitMatrix, strategy_ids: Optional[List[str]] = None) -> pd.DataFrame:
    """Mean daily profit per strategy and the number of days it is best, by calendar year"""
    ids = strategy_ids or profits.strategy_ids
    matrix = profits.restrict(strategy_ids=ids).complete()
    rows = []
    for year in sorted({d.year for d in matrix.days}):
        part = matrix.restrict([d for d in matrix.days if d.year == year])
        best = best_counts(part)
        for sid in ids:
            rows.append({
                "year": year,
                "strategy_id": sid,
                "overall": part.total[sid].mean(),
                "idm": part.idm[sid].mean(),
                "fcr": part.fcr[sid].mean(),
                "best": best[sid],
            })
    return pd.DataFrame(rows, columns=["year", "strategy_id", "overall", "idm", "fcr", "best"])


def benchmark_table(report: BenchmarkReport) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in report.rows])


def _write_csv(frame: pd.DataFrame, path: Path, index: bool = False) -> str:
    frame.to_csv(path, index=index, float_format="%.6f", lineterminator="\n")
    return str(path)


def _dated(frame: pd.DataFrame, label: str) -> pd.DataFrame:
    out = frame.copy()
    out.index = [d.isoformat() for d in out.index]
    out.index.name = label
    return out


def write_tables(report: BenchmarkReport, profits: ProfitMatrix, catalogue: List[str], out_dir: str) -> Dict[str, str]:
    base = Path(out_dir)
    base.mkdir(parents=True, exist_ok=True)
    return {
        "strategies.csv": _write_csv(strategy_table(profits, catalogue), base / "strategies.csv"),
        "benchmarks.csv": _write_csv(benchmark_table(report), base / "benchmarks.csv"),
        "cumulative.csv": _write_csv(_dated(report.cumulative(), "date"), base / "cumulative.csv", index=True),
        "weekly_normalized.csv": _write_csv(
            _dated(report.weekly_normalized(), "week"), base / "weekly_normalized.csv", index=True
        ),
    }


def emit_reports(run: BacktestRun, out_dir: str) -> Dict[str, str]:
    """Write the report file set, plus the inputs `report --from` re-renders from

    Nothing time-of-run dependent is written, so identical runs give identical files.
    """
    base = Path(out_dir)
    written = write_tables(run.report, run.profits, run.catalogue, out_dir)
    written[PROFIT_FILE] = run.profits.to_csv(str(base / PROFIT_FILE))
    written[DECISIONS_FILE] = _write_csv(decisions_frame(run.decisions), base / DECISIONS_FILE)

    decisions = run.report.decisions
    manifest = {
        "app": settings.APP_NAME,
        "version": settings.VERSION,
        "config": json.loads(run.config.model_dump_json()),
        "seed": run.config.seed,
        "fingerprint": run.fingerprint,
        "catalogue": run.catalogue,
        "static": str(decisions[STATIC].iloc[0]),
        "only_fcr": str(decisions[ONLY_FCR].iloc[0]),
        "only_idm": str(decisions[ONLY_IDM].iloc[0]),
        "oos_days": [d.isoformat() for d in run.config.oos_days()],
        "files": sorted(REPORT_FILES + (PROFIT_FILE, DECISIONS_FILE)),
    }
    path = base / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written["run_manifest.json"] = str(path)

    logger.info(f"📄 Reports written to {base}")
    return written


def rerender(source_dir: str, out_dir: Optional[str] = None) -> Dict[str, str]:
    """Rebuild the report tables from a backtest directory's profit matrix and decisions"""
    base = Path(source_dir)
    profits = ProfitMatrix.from_csv(str(base / PROFIT_FILE))
    manifest = json.loads((base / "run_manifest.json").read_text())
    frame = pd.read_csv(base / DECISIONS_FILE, dtype=str, keep_default_na=False)
    days = [pd.Timestamp(d).date() for d in frame["date"]]

    decisions = benchmark_decisions(
        days,
        profits,
        manifest["catalogue"],
        pools={d: p.split() for d, p in zip(days, frame["pool"])},
        lcs=dict(zip(days, frame["decision"])),
        dynamic=dict(zip(days, frame["dynamic"])),
        static=manifest["static"],
        only_fcr=manifest["only_fcr"],
        only_idm=manifest["only_idm"],
    )
    report = evaluate_policies(decisions, profits)
    written = write_tables(report, profits, manifest["catalogue"], out_dir or source_dir)
    logger.info(f"📄 Reports re-rendered from {base}")
    return written
