"""Request and response bodies of the monitor and ledger endpoints."""

from typing import Any

from pydantic import BaseModel, Field

from barrierstl.models.scenario import ScenarioConfig, ShapeConfig
from barrierstl.services.stl import DEFAULT_BETA


class MonitorRequest(BaseModel):
    formula: str = Field(..., min_length=1, examples=["F[0,2] reg1 & G[0,2] !obs1"])
    shapes: dict[str, ShapeConfig] = Field(..., min_length=1, description="Named shapes the formula refers to")
    dynamics: str = Field("double_integrator", description="Registered dynamics defining the state layout")
    dt: float = Field(..., gt=0.0, description="Sampling period of ``states``")
    states: list[list[float]] = Field(..., min_length=2, description="One state per sample, starting at t = 0")
    t: float = Field(0.0, ge=0.0, description="Evaluation time")
    beta: float = Field(DEFAULT_BETA, ge=0.0, le=1.0, description="Weight of the min in the exponential conjunction")


class MonitorResponse(BaseModel):
    formula: str = Field(..., description="Formula as printed back by the parser")
    robustness: float | None = Field(..., description="Robustness at ``t``; null when unbounded (trivially true)")
    satisfied: bool
    horizon: float
    samples: int


class LedgerRequest(BaseModel):
    scenario: ScenarioConfig
    x0: tuple[float, float] | None = Field(None, description="Position the intervals are evaluated at")


class LedgerResponse(BaseModel):
    formula: str
    config_hash: str
    x0: list[float]
    raw_outputs: int = Field(..., description="Width of the raw γ output the InitNet produces")
    specs: list[dict[str, Any]]
