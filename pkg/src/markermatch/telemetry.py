"""
Tracing helpers for pipeline stages.
Uses OpenTelemetry when installed; otherwise stages are only logged.
"""
import logging
import sys
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

try:
    from opentelemetry import trace
    from opentelemetry.sdk.resources import SERVICE_NAME, SERVICE_VERSION, Resource
    from opentelemetry.sdk.trace import TracerProvider
    from opentelemetry.sdk.trace.export import (
        BatchSpanProcessor,
        ConsoleSpanExporter,
        SpanExporter,
    )
    from opentelemetry.trace import Status, StatusCode
    TELEMETRY_AVAILABLE = True
except ImportError:
    TELEMETRY_AVAILABLE = False

from .config import Settings
from .exceptions import MarkerMatchError

logger = logging.getLogger(__name__)

_provider: Optional[Any] = None


def configure_tracing(settings: Settings, exporter: Optional[Any] = None) -> Optional[Any]:
    """
    Install a TracerProvider when FEATURE_TELEMETRY is on.

    Spans go to `exporter`, or to a console exporter on stderr. Returns the provider, or
    None when tracing is off or unavailable.
    """
    global _provider
    if not settings.telemetry_enabled:
        return None
    if not TELEMETRY_AVAILABLE:
        logger.warning("Telemetry requested but OpenTelemetry is not installed")
        return None
    if _provider is not None:
        return _provider

    resource = Resource.create(
        {SERVICE_NAME: settings.app_name, SERVICE_VERSION: settings.app_version}
    )
    provider = TracerProvider(resource=resource)
    span_exporter: SpanExporter = exporter or ConsoleSpanExporter(out=sys.stderr)
    provider.add_span_processor(BatchSpanProcessor(span_exporter))
    _provider = provider
    logger.info(f"Tracing enabled for {settings.app_name} {settings.app_version}")
    return provider


def shutdown_tracing() -> None:
    """Flush pending spans and detach the provider installed by configure_tracing."""
    global _provider
    if _provider is not None:
        _provider.shutdown()
        _provider = None


def get_tracer() -> Optional[Any]:
    """Return a tracer, or None when OpenTelemetry is missing."""
    if not TELEMETRY_AVAILABLE:
        return None
    if _provider is not None:
        return _provider.get_tracer("markermatch")
    return trace.get_tracer("markermatch")


@contextmanager
def stage(name: str, **attributes: Any) -> Iterator[Dict[str, Any]]:
    """
    Run a pipeline stage inside a span.

    Any MarkerMatchError raised inside gets `stage` set to `name` unless an inner stage
    already claimed it. The yielded dict collects attributes recorded on the span at exit.
    """
    recorded: Dict[str, Any] = dict(attributes)
    start_time = time.perf_counter()
    tracer = get_tracer()
    logger.debug(f"Stage {name} started")

    if tracer is None:
        try:
            yield recorded
        except MarkerMatchError as e:
            if e.stage is None:
                e.stage = name
            raise
        finally:
            duration_ms = (time.perf_counter() - start_time) * 1000
            logger.debug(f"Stage {name} finished in {duration_ms:.1f} ms")
        return

    with tracer.start_as_current_span(
        f"markermatch.{name}", record_exception=False, set_status_on_exception=False
    ) as span:
        try:
            yield recorded
            span.set_status(Status(StatusCode.OK))
        except MarkerMatchError as e:
            if e.stage is None:
                e.stage = name
            span.set_status(Status(StatusCode.ERROR, str(e)))
            span.record_exception(e)
            raise
        finally:
            for key, value in recorded.items():
                if isinstance(value, (bool, int, float, str)):
                    span.set_attribute(f"markermatch.{key}", value)
            duration_ms = (time.perf_counter() - start_time) * 1000
            span.set_attribute("markermatch.duration_ms", duration_ms)
            logger.debug(f"Stage {name} finished in {duration_ms:.1f} ms")
