"""
FastAPI main application entry point.
"""
import logging
from contextlib import asynccontextmanager
from typing import AsyncIterator, Dict

from fastapi import FastAPI

try:
    from opentelemetry.instrumentation.fastapi import FastAPIInstrumentor
    TELEMETRY_AVAILABLE = True
except ImportError:
    TELEMETRY_AVAILABLE = False

from .config import get_settings
from .routers import alignment, health
from .telemetry import configure_tracing, shutdown_tracing

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI) -> AsyncIterator[None]:
    """Application lifespan manager for startup and shutdown."""
    logger.info("Starting markermatch API")
    yield
    shutdown_tracing()
    logger.info("Shutting down markermatch API")


# Create FastAPI application
settings = get_settings()

app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="Affine alignment and matching of partially labeled spot configurations",
    lifespan=lifespan,
    docs_url="/docs",
    openapi_url="/openapi.json",
)

# Instrument with OpenTelemetry
if settings.telemetry_enabled and TELEMETRY_AVAILABLE:
    FastAPIInstrumentor.instrument_app(app, tracer_provider=configure_tracing(settings))
elif settings.telemetry_enabled and not TELEMETRY_AVAILABLE:
    logger.warning("OpenTelemetry instrumentation requested but not available")

# Include routers
app.include_router(health.router)
app.include_router(alignment.router)


@app.get("/", tags=["root"])
async def root() -> Dict[str, str]:
    """Root endpoint with API information."""
    return {
        "name": settings.app_name,
        "version": settings.app_version,
        "docs": "/docs",
        "health": "/health",
    }
