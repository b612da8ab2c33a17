"""
Health check endpoints.

- /health: version, environment, registered dynamics and shape kinds
- /health/live: liveness probe
- /health/ready: readiness probe (the numeric stack imports and a tiny QP solves)
"""

import logging
import platform
import sys
from datetime import datetime, timezone
from typing import Any

import numpy as np
from fastapi import APIRouter, Request, status
from pydantic import BaseModel, Field

from barrierstl import __version__
from barrierstl.core.exceptions import BarrierStlError
from barrierstl.models.dynamics import DYNAMICS
from barrierstl.models.scenario import CircleConfig, SuperellipseConfig
from barrierstl.services.qp import QpProblem, solve

logger = logging.getLogger(__name__)

router = APIRouter()

SHAPE_KINDS = [CircleConfig.model_fields["kind"].default, SuperellipseConfig.model_fields["kind"].default]


class HealthResponse(BaseModel):
    """Health check response model."""

    status: str = Field(..., description="Overall health status", examples=["healthy"])
    version: str = Field(..., description="Application version", examples=["0.1.0"])
    timestamp: datetime = Field(..., description="Current server timestamp (UTC)")
    environment: str | None = Field(None, description="Deployment environment", examples=["development"])


class DetailedHealthResponse(HealthResponse):
    """Health response with system information and the registered models."""

    system: dict[str, Any] = Field(..., description="System information")
    dynamics: list[str] = Field(..., description="Registered dynamics", examples=[["double_integrator"]])
    shapes: list[str] = Field(..., description="Supported shape kinds", examples=[["circle", "superellipse"]])


class LivenessResponse(BaseModel):
    alive: bool = Field(..., description="Whether the application is alive", examples=[True])
    timestamp: datetime = Field(..., description="Current server timestamp (UTC)")


class ReadinessResponse(BaseModel):
    ready: bool = Field(..., description="Whether the application is ready to serve traffic", examples=[True])
    checks: dict[str, bool] = Field(..., description="Readiness checks for each component")
    timestamp: datetime = Field(..., description="Current server timestamp (UTC)")


def _qp_solver_ready() -> bool:
    try:
        solution = solve(QpProblem(np.eye(2), np.zeros(2), np.array([[1.0, 0.0]]), np.array([1.0])))
    except BarrierStlError:
        logger.exception("QP self-check failed")
        return False
    return bool(np.allclose(solution.u, [1.0, 0.0], atol=1e-8))


@router.get(
    "/health",
    response_model=DetailedHealthResponse,
    status_code=status.HTTP_200_OK,
    summary="Health check",
    description="Returns version, system details and the registered dynamics and shapes",
)
async def health_check(request: Request) -> DetailedHealthResponse:
    return DetailedHealthResponse(
        status="healthy",
        version=__version__,
        timestamp=datetime.now(timezone.utc),
        environment=getattr(request.app.state, "environment", None),
        system={
            "python_version": sys.version,
            "platform": platform.platform(),
            "numpy_version": np.__version__,
        },
        dynamics=sorted(DYNAMICS),
        shapes=SHAPE_KINDS,
    )


@router.get(
    "/health/live",
    response_model=LivenessResponse,
    status_code=status.HTTP_200_OK,
    summary="Liveness probe",
)
async def liveness_check() -> LivenessResponse:
    logger.debug("Liveness check performed")
    return LivenessResponse(alive=True, timestamp=datetime.now(timezone.utc))


@router.get(
    "/health/ready",
    response_model=ReadinessResponse,
    status_code=status.HTTP_200_OK,
    summary="Readiness probe",
)
async def readiness_check() -> ReadinessResponse:
    """Ready once the QP layer solves a known instance."""
    checks = {"application": True, "qp_solver": _qp_solver_ready()}
    ready = all(checks.values())
    if not ready:
        logger.warning("Readiness check failed: %s", checks)
    return ReadinessResponse(ready=ready, checks=checks, timestamp=datetime.now(timezone.utc))
