"""
FastAPI application factory for the monitor service.

The service exposes the STL monitor and the HOCBF ledger synthesis over
HTTP; training stays on the command line.
"""

import logging
import math
from collections.abc import AsyncGenerator
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from barrierstl import __version__
from barrierstl.api.routes import health, monitor
from barrierstl.core.config import get_settings
from barrierstl.core.exceptions import BarrierStlError, InfeasibilityError, UserError

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI) -> AsyncGenerator[None, None]:
    logger.info("Starting barrier-stl API v%s", __version__)
    yield
    logger.info("Shutting down barrier-stl API")


def create_app(environment: str | None = None) -> FastAPI:
    """
    FastAPI application factory.

    Args:
        environment: Application environment; defaults to the configured one.
            API docs are disabled in production.

    Returns:
        Configured FastAPI application instance

    """
    environment = environment or get_settings().environment
    docs = environment != "production"
    app = FastAPI(
        title="barrier-stl monitor API",
        description="STL robustness monitoring and HOCBF constraint synthesis",
        version=__version__,
        lifespan=lifespan,
        docs_url="/api/docs" if docs else None,
        redoc_url="/api/redoc" if docs else None,
        openapi_url="/api/openapi.json" if docs else None,
    )
    app.state.environment = environment
    _configure_middleware(app)
    _register_error_handlers(app)
    _register_routes(app)
    return app


def _configure_middleware(app: FastAPI) -> None:
    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        """Log all incoming requests and responses."""
        logger.info("Incoming request: %s %s", request.method, request.url.path)
        response = await call_next(request)
        logger.info("Response: %s %s - Status: %d", request.method, request.url.path, response.status_code)
        return response


def error_status(exc: BarrierStlError) -> int:
    """HTTP status for a library error: 422 user input, 409 infeasible, 500 otherwise."""
    if isinstance(exc, UserError):
        return status.HTTP_422_UNPROCESSABLE_ENTITY
    if isinstance(exc, InfeasibilityError):
        return status.HTTP_409_CONFLICT
    return status.HTTP_500_INTERNAL_SERVER_ERROR


def _register_error_handlers(app: FastAPI) -> None:
    @app.exception_handler(BarrierStlError)
    async def library_error_handler(request: Request, exc: BarrierStlError) -> JSONResponse:
        code = error_status(exc)
        if code >= status.HTTP_500_INTERNAL_SERVER_ERROR:
            logger.error("%s: %s", type(exc).__name__, exc.message)
        else:
            logger.warning("%s: %s", type(exc).__name__, exc.message)
        return JSONResponse(status_code=code, content=jsonable_error(exc))

    @app.exception_handler(RequestValidationError)
    async def validation_exception_handler(request: Request, exc: RequestValidationError) -> JSONResponse:
        """Handle FastAPI request validation errors."""
        logger.warning("Validation error: %s", exc.errors())
        return JSONResponse(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            content={
                "error": "validation_error",
                "message": "Request validation failed",
                "details": [{"loc": list(e["loc"]), "msg": e["msg"]} for e in exc.errors()],
            },
        )

    @app.exception_handler(Exception)
    async def unhandled_exception_handler(request: Request, exc: Exception) -> JSONResponse:
        """Handle unexpected exceptions."""
        logger.exception("Unhandled exception: %s", str(exc))
        return JSONResponse(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            content={"error": "internal_error", "message": "An unexpected error occurred"},
        )


def jsonable_error(exc: BarrierStlError) -> dict:
    """Error body with non-JSON detail values (paths, infinities) rendered as strings."""
    body = exc.to_dict()
    details = {}
    for key, value in body["details"].items():
        if isinstance(value, float) and not math.isfinite(value):
            value = str(value)
        elif not isinstance(value, int | float | str | bool | list | dict | None):
            value = str(value)
        details[key] = value
    body["details"] = details
    return body


def _register_routes(app: FastAPI) -> None:
    app.include_router(health.router, prefix="/api/v1", tags=["health"])
    app.include_router(monitor.router, prefix="/api/v1", tags=["monitor"])


# Default application instance for uvicorn
app = create_app()
