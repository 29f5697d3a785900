from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.exceptions import RequestValidationError
from starlette.exceptions import HTTPException as StarletteHTTPException
from contextlib import asynccontextmanager
from datetime import datetime, timezone
import logging

from app.config import settings
from app.exceptions import BessError, DataError, SchemaMismatchError
from app.middleware.performance import PerformanceMiddleware
from app.middleware.request_id import RequestIDMiddleware
from app.services.observability import setup_logging

from app.api import (
    backtest,
    market,
    monitoring,
    physics,
    pool,
)

setup_logging(settings.LOG_LEVEL, settings.LOG_FORMAT)
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Startup and shutdown events"""
    logger.info(f"🚀 {settings.APP_NAME} starting...")
    logger.info(f"Environment: {settings.ENVIRONMENT}")
    logger.info(f"Version: {settings.VERSION}")
    logger.info(f"Battery: {settings.POWER_MW} MW / {settings.ENERGY_MWH} MWh, MILP backend {settings.MILP_BACKEND}")

    yield

    logger.info(f"👋 {settings.APP_NAME} shutting down...")


app = FastAPI(
    title=settings.APP_NAME,
    description="Joint FCR capacity bidding and rolling-intrinsic intraday trading for a battery",
    version=settings.VERSION,
    lifespan=lifespan,
    docs_url="/docs",
    redoc_url="/redoc",
)

# Middleware (order matters: the last added runs first)
app.add_middleware(PerformanceMiddleware)
app.add_middleware(RequestIDMiddleware)

app.include_router(market.router, prefix="/api/market", tags=["Market"])
app.include_router(physics.router, prefix="/api/physics", tags=["FCR Physics"])
app.include_router(pool.router, prefix="/api/pool", tags=["Strategy Pool"])
app.include_router(backtest.router, prefix="/api/backtest", tags=["Backtest"])
app.include_router(monitoring.router, prefix="/api/monitoring", tags=["Monitoring"])


@app.get("/")
async def root():
    """Root endpoint"""
    return {
        "service": settings.APP_NAME,
        "version": settings.VERSION,
        "status": "operational",
        "docs": "/docs",
        "health": "/health",
        "environment": settings.ENVIRONMENT,
    }


@app.get("/health")
async def health_check():
    """Health check for load balancers"""
    return {
        "status": "healthy",
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "environment": settings.ENVIRONMENT,
        "version": settings.VERSION,
    }


@app.exception_handler(StarletteHTTPException)
async def http_exception_handler(request, exc):
    """Handle HTTP exceptions"""
    logger.error(f"HTTP error: {exc.status_code} - {exc.detail}")
    return JSONResponse(
        status_code=exc.status_code,
        content={
            "detail": exc.detail,
            "request_id": getattr(request.state, "request_id", None),
        },
    )


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request, exc):
    """Handle validation errors"""
    logger.error(f"Validation error: {exc}")
    return JSONResponse(
        status_code=422,
        content={
            "detail": "Validation error",
            "errors": exc.errors(),
            "request_id": getattr(request.state, "request_id", None),
        },
    )


def _domain_status(exc: Exception) -> int:
    if isinstance(exc, SchemaMismatchError):
        return 409
    if isinstance(exc, DataError):
        return 422
    return 400


@app.exception_handler(BessError)
@app.exception_handler(ValueError)
async def domain_exception_handler(request, exc):
    """Engine and argument errors become 4xx responses"""
    status = _domain_status(exc)
    logger.warning(f"{type(exc).__name__}: {exc}")
    return JSONResponse(
        status_code=status,
        content={
            "detail": str(exc),
            "error": type(exc).__name__,
            "request_id": getattr(request.state, "request_id", None),
        },
    )


@app.exception_handler(Exception)
async def global_exception_handler(request, exc):
    """Global exception handler"""
    logger.error(f"Unhandled exception: {exc}", exc_info=True)
    return JSONResponse(
        status_code=500,
        content={
            "detail": "Internal server error",
            "request_id": getattr(request.state, "request_id", None),
        },
    )
