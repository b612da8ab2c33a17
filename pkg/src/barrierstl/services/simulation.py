"""
Closed-loop rollouts and the training objective.

Every episode records its states on its own tape. The control u_k is held
constant over [kΔt, (k+1)Δt); states advance with forward Euler (the
training discretization) or classical RK4 (validation only).
"""

import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from barrierstl.core.autodiff import Operand, Tape, TapeScalar, as_scalar, constant, total
from barrierstl.models.dynamics import Dynamics
from barrierstl.models.formula import Formula
from barrierstl.models.scenario import TrainConfig
from barrierstl.models.trajectory import Trajectory, sample_count
from barrierstl.services.controller import Controller, EpisodeController
from barrierstl.services.stl import horizon, robustness, satisfies

logger = logging.getLogger(__name__)

StateVec = list[TapeScalar]


def _axpy(x: Sequence[Operand], a: float, y: Sequence[Operand]) -> StateVec:
    return [as_scalar(xi) + a * as_scalar(yi) for xi, yi in zip(x, y, strict=True)]


def euler_step(dynamics: Dynamics, x: Sequence[Operand], u: Sequence[Operand], dt: float) -> StateVec:
    """x + Δt·(f(x) + g(x)·u)."""
    return _axpy(x, dt, dynamics.vector_field(x, u))


def rk4_step(dynamics: Dynamics, x: Sequence[Operand], u: Sequence[Operand], dt: float) -> StateVec:
    """Classical fourth-order Runge–Kutta step with u held constant."""
    k1 = dynamics.vector_field(x, u)
    k2 = dynamics.vector_field(_axpy(x, 0.5 * dt, k1), u)
    k3 = dynamics.vector_field(_axpy(x, 0.5 * dt, k2), u)
    k4 = dynamics.vector_field(_axpy(x, dt, k3), u)
    return [
        as_scalar(xi) + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for xi, a, b, c, d in zip(x, k1, k2, k3, k4, strict=True)
    ]


INTEGRATORS: dict[str, Callable[[Dynamics, Sequence[Operand], Sequence[Operand], float], StateVec]] = {
    "euler": euler_step,
    "rk4": rk4_step,
}


@dataclass
class Episode:
    """One closed-loop rollout and, once scored, its robustness and cost."""

    x0: np.ndarray
    tape: Tape
    trajectory: Trajectory
    controller: EpisodeController
    barrier_values: list[dict[str, float]] = field(default_factory=list)
    step_seconds: list[float] = field(default_factory=list)
    robustness: TapeScalar | None = None
    cost: TapeScalar | None = None
    objective: TapeScalar | None = None
    satisfied: bool | None = None

    @property
    def min_barrier(self) -> float:
        """Smallest barrier value over every recorded sample (inf without barriers)."""
        return min((v for values in self.barrier_values for v in values.values()), default=float("inf"))

    @property
    def mean_step_seconds(self) -> float:
        return float(np.mean(self.step_seconds)) if self.step_seconds else 0.0


def rollout(
    dynamics: Dynamics,
    controller: EpisodeController,
    x0: Sequence[Operand],
    horizon_s: float,
    dt: float,
    integrator: str = "euler",
    tape: Tape | None = None,
) -> Episode:
    """Simulate ⌈T/Δt⌉ steps from ``x0`` under ``controller``."""
    advance = INTEGRATORS[integrator]
    steps = sample_count(horizon_s, dt) - 1
    x = [as_scalar(v) for v in x0]
    states, controls = [x], []
    barriers, seconds = [], []
    for k in range(steps):
        t = k * dt
        barriers.append(controller.barrier_values(x, t))
        started = time.perf_counter()
        u = controller.act(x, t)
        seconds.append(time.perf_counter() - started)
        x = advance(dynamics, x, u, dt)
        controller.advance(x, (k + 1) * dt)
        states.append(x)
        controls.append(u)
    barriers.append(controller.barrier_values(x, steps * dt))
    trajectory = Trajectory(dt, states, controls, dynamics.position_indices)
    return Episode(
        x0=np.array([v.value for v in states[0]]),
        tape=tape if tape is not None else Tape(),
        trajectory=trajectory,
        controller=controller,
        barrier_values=barriers,
        step_seconds=seconds,
    )


def control_cost(controls: Sequence[Sequence[Operand]], dt: float, coeff: float) -> TapeScalar:
    """J(u) = coeff·Σ_k ‖u_k‖²·Δt."""
    return coeff * dt * total(as_scalar(v) * v for u in controls for v in u)


def score_episode(episode: Episode, formula: Formula, beta: float, cost_coeff: float) -> Episode:
    """Attach ρ(φ, x, 0), J(u), ρ − J and the qualitative verdict."""
    traj = episode.trajectory
    episode.robustness = robustness(formula, traj, 0.0, beta)
    episode.cost = control_cost(traj.controls, traj.dt, cost_coeff)
    episode.objective = episode.robustness - episode.cost
    episode.satisfied = satisfies(formula, traj, 0.0)
    logger.debug(
        "Episode x0=%s rho=%.4f J=%.4f satisfied=%s",
        np.round(episode.x0[:2], 4).tolist(),
        episode.robustness.value,
        episode.cost.value,
        episode.satisfied,
    )
    return episode


def run_episode(
    controller: Controller,
    formula: Formula,
    dynamics: Dynamics,
    x0: np.ndarray,
    cfg: TrainConfig,
    integrator: str | None = None,
) -> Episode:
    """Start ``controller`` on a fresh tape, roll out over the formula horizon and score."""
    tape = Tape()
    episode_controller = controller.episode(tape, x0)
    episode = rollout(
        dynamics,
        episode_controller,
        [constant(v) for v in x0],
        horizon(formula),
        cfg.dt,
        integrator or cfg.integrator,
        tape,
    )
    return score_episode(episode, formula, cfg.beta, cfg.cost_coeff)


def episode_objective(episode: Episode) -> TapeScalar:
    if episode.objective is None:
        raise ValueError("episode has not been scored")
    return episode.objective


def objective(batch: Sequence[Episode]) -> TapeScalar:
    """
    Batch mean of ρ − J.

    Episodes normally live on separate tapes; the mean is then a constant and
    gradients are taken per episode (see ``training.batch_gradient``). When all
    episodes share one tape the mean is recorded on it.
    """
    if not batch:
        raise ValueError("objective of an empty batch")
    values = [episode_objective(e) for e in batch]
    tapes = {id(v.tape) for v in values if v.tape is not None}
    if len(tapes) <= 1:
        return total(values) / len(values)
    return constant(sum(v.value for v in values) / len(values))
