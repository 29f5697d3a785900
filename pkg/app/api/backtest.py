"""Backtest job endpoints"""

from fastapi import APIRouter, BackgroundTasks, HTTPException
from pathlib import Path
from typing import Any, Dict
import logging
import uuid

from app.config import settings
from app.models.api import BacktestRequest, BacktestStatus
from app.models.schemas import BacktestConfig, ClassifierConfig, RiConfig
from app.services.observability import log_context
from app.services.reports import benchmark_table, emit_reports
from app.services.backtest import run_backtest

router = APIRouter()
logger = logging.getLogger(__name__)

# In-memory job tracking; jobs do not survive a restart
backtest_jobs: Dict[str, Dict[str, Any]] = {}


def build_config(request: BacktestRequest) -> BacktestConfig:
    """Settings-derived configuration with the request's overrides applied"""
    ri = settings.ri_config()
    ri_updates = {}
    if request.resolve_minutes is not None:
        ri_updates["resolve_minutes"] = request.resolve_minutes
    if request.product_duration_h is not None:
        ri_updates["product_duration_h"] = request.product_duration_h
    classifier = settings.classifier_config()
    cls_updates = {}
    if request.window_days is not None:
        cls_updates["window_days"] = request.window_days
    if request.pool_size is not None:
        cls_updates["pool_size"] = request.pool_size
    return BacktestConfig(
        start=request.start,
        end=request.end,
        spec=settings.bess_spec(),
        ri=RiConfig(**{**ri.model_dump(), **ri_updates}),
        classifier=ClassifierConfig(**{**classifier.model_dump(), **cls_updates}),
        seed=request.seed,
        max_workers=settings.MAX_WORKERS,
        synthetic_regime=request.regime,
    )


def run_backtest_job(job_id: str, config: BacktestConfig) -> None:
    backtest_jobs[job_id]["status"] = "running"
    try:
        with log_context(run_id=job_id):
            run = run_backtest(config)
            out_dir = str(Path(settings.OUTPUT_DIR) / job_id)
            files = emit_reports(run, out_dir)
        backtest_jobs[job_id].update({
            "status": "completed",
            "message": f"Reports written to {out_dir}",
            "files": files,
            "benchmarks": benchmark_table(run.report).to_dict(orient="records"),
        })
    except Exception as e:
        logger.error(f"Backtest job {job_id} failed: {e}", exc_info=True)
        backtest_jobs[job_id].update({"status": "failed", "message": str(e)})


@router.post("/run", response_model=BacktestStatus)
async def start_backtest(request: BacktestRequest, background_tasks: BackgroundTasks):
    """Queue a backtest; poll /status/{job_id} for progress"""
    config = build_config(request)
    job_id = str(uuid.uuid4())
    backtest_jobs[job_id] = {
        "job_id": job_id,
        "status": "queued",
        "message": f"{len(config.oos_days())} out-of-sample days",
        "oos_days": len(config.oos_days()),
    }
    background_tasks.add_task(run_backtest_job, job_id, config)
    logger.info(f"[BACKTEST] queued job {job_id} for {request.start}..{request.end}")
    return BacktestStatus(**{k: backtest_jobs[job_id][k] for k in ("job_id", "status", "message", "oos_days")})


@router.get("/status/{job_id}", response_model=BacktestStatus)
async def backtest_status(job_id: str):
    job = backtest_jobs.get(job_id)
    if job is None:
        raise HTTPException(status_code=404, detail=f"Unknown backtest job {job_id}")
    return BacktestStatus(**{k: job[k] for k in ("job_id", "status", "message", "oos_days")})


@router.get("/report/{job_id}")
async def backtest_report(job_id: str) -> Dict[str, Any]:
    job = backtest_jobs.get(job_id)
    if job is None:
        raise HTTPException(status_code=404, detail=f"Unknown backtest job {job_id}")
    if job["status"] != "completed":
        raise HTTPException(status_code=409, detail=f"Backtest job {job_id} is {job['status']}")
    return {"job_id": job_id, "benchmarks": job["benchmarks"], "files": job["files"]}
