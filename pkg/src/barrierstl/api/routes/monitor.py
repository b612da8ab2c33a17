"""
Monitor and ledger endpoints.

- POST /monitor: robustness and verdict of a sampled trajectory
- POST /ledger: HOCBFs and γ intervals synthesized for a scenario
"""

import logging
import math

from fastapi import APIRouter, status

from barrierstl.api.schemas.monitor import LedgerRequest, LedgerResponse, MonitorRequest, MonitorResponse
from barrierstl.core.exceptions import ConfigValidationError, TrajectoryFormatError
from barrierstl.models.dynamics import get_dynamics
from barrierstl.models.trajectory import Trajectory
from barrierstl.services.runs import cmd_ledger
from barrierstl.services.stl import format_formula, horizon, parse, robustness, satisfies

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post(
    "/monitor",
    response_model=MonitorResponse,
    status_code=status.HTTP_200_OK,
    summary="Evaluate a formula on a trajectory",
)
def monitor(body: MonitorRequest) -> MonitorResponse:
    try:
        dynamics = get_dynamics(body.dynamics)
    except ValueError as exc:
        raise ConfigValidationError(str(exc), dynamics=body.dynamics) from exc
    bad = [k for k, row in enumerate(body.states) if len(row) != dynamics.n]
    if bad:
        raise TrajectoryFormatError(
            f"state {bad[0]} has {len(body.states[bad[0]])} entries, {dynamics.name} needs {dynamics.n}",
            rows=bad[:10],
        )
    formula = parse(body.formula, {name: cfg.build() for name, cfg in body.shapes.items()})
    traj = Trajectory.from_array(body.dt, body.states, position_indices=dynamics.position_indices)
    rho = robustness(formula, traj, body.t, body.beta).value
    verdict = satisfies(formula, traj, body.t)
    logger.debug("Monitored %d samples: rho=%s satisfied=%s", len(traj), rho, verdict)
    return MonitorResponse(
        formula=format_formula(formula),
        robustness=rho if math.isfinite(rho) else None,
        satisfied=verdict,
        horizon=horizon(formula),
        samples=len(traj),
    )


@router.post(
    "/ledger",
    response_model=LedgerResponse,
    status_code=status.HTTP_200_OK,
    summary="Synthesize the HOCBF constraint ledger of a scenario",
)
def ledger(body: LedgerRequest) -> LedgerResponse:
    return LedgerResponse(**cmd_ledger(body.scenario, body.x0))
