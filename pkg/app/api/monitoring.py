"""Monitoring and health check endpoints"""

from fastapi import APIRouter
from typing import Dict, Any
from datetime import datetime

from app.services.monitoring import metrics_collector
from app.config import settings

router = APIRouter()


@router.get("/metrics")
async def get_metrics() -> Dict[str, Any]:
    """Solve counts by path, infeasible solves, day runs and request stats"""
    return metrics_collector.get_summary()


@router.get("/health/detailed")
async def detailed_health_check() -> Dict[str, Any]:
    """Health check with solver backend status"""
    health = {
        "status": "healthy",
        "timestamp": datetime.utcnow().isoformat(),
        "version": settings.VERSION,
        "environment": settings.ENVIRONMENT,
        "services": {},
    }
    try:
        import scipy.optimize  # noqa: F401

        health["services"]["solver"] = {"status": "up", "backend": settings.MILP_BACKEND}
    except Exception as e:
        health["services"]["solver"] = {"status": "down", "error": str(e)}
        health["status"] = "degraded"
    return health


@router.get("/health/liveness")
async def liveness_check():
    """Liveness check"""
    return {"status": "alive"}
