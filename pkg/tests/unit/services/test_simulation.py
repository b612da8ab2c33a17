"""
Tests for rollouts and the training objective.

Tests verify:
- Euler and RK4 steps of the double integrator
- Rollout bookkeeping (sample count, controls, barrier records, timings)
- Control cost, scoring and the batch objective
"""

import math

import numpy as np
import pytest

from barrierstl.core.autodiff import Tape, constant
from barrierstl.models.dynamics import get_dynamics
from barrierstl.models.shapes import Circle
from barrierstl.services.controller import EpisodeController
from barrierstl.services.simulation import (
    control_cost,
    episode_objective,
    euler_step,
    objective,
    rk4_step,
    rollout,
    run_episode,
    score_episode,
)
from barrierstl.services.stl import parse
from barrierstl.services.training import make_controller, prepare

DYN = get_dynamics("double_integrator")


class ConstantControl(EpisodeController):
    """Applies a fixed control, optionally as leaves of ``tape``."""

    def __init__(self, u, tape=None):
        self.u = u
        self.tape = tape
        self.advanced = []

    def act(self, x, t):
        if self.tape is not None:
            return [self.tape.leaf(v) for v in self.u]
        return [constant(v) for v in self.u]

    def advance(self, x_next, t_next):
        self.advanced.append(round(t_next, 9))


@pytest.mark.unit
def test_euler_and_rk4_steps():
    x, u = [0.0, 0.0, 1.0, 0.0], [0.0, 2.0]
    assert [v.value for v in euler_step(DYN, x, u, 0.1)] == pytest.approx([0.1, 0.0, 1.0, 0.2])
    assert [v.value for v in rk4_step(DYN, x, u, 0.1)] == pytest.approx([0.1, 0.01, 1.0, 0.2])


@pytest.mark.unit
@pytest.mark.parametrize(("integrator", "py"), [("euler", 0.9), ("rk4", 1.0)])
def test_rollout_under_constant_acceleration(integrator, py):
    controller = ConstantControl([0.0, 2.0])
    episode = rollout(DYN, controller, [0.0, 0.0, 0.0, 0.0], 1.0, 0.1, integrator)
    traj = episode.trajectory
    assert len(traj) == 11
    assert len(traj.controls) == 10
    assert traj.state_values()[-1] == pytest.approx([0.0, py, 0.0, 2.0])
    assert controller.advanced == pytest.approx([0.1 * k for k in range(1, 11)])
    assert len(episode.barrier_values) == 11
    assert len(episode.step_seconds) == 10
    assert episode.mean_step_seconds >= 0.0
    assert math.isinf(episode.min_barrier)
    assert episode.x0.tolist() == [0.0, 0.0, 0.0, 0.0]


@pytest.mark.unit
def test_rollout_covers_a_horizon_that_is_not_a_multiple_of_dt():
    episode = rollout(DYN, ConstantControl([0.0, 0.0]), [0.0, 0.0, 0.0, 0.0], 0.95, 0.1)
    assert len(episode.trajectory) == 11


@pytest.mark.unit
def test_control_cost():
    cost = control_cost([[constant(1.0), constant(2.0)], [3.0, 0.0]], 0.1, 0.5)
    assert cost.value == pytest.approx(0.7)
    assert control_cost([], 0.1, 0.5).value == 0.0


@pytest.mark.unit
def test_score_episode_attaches_robustness_cost_and_verdict():
    formula = parse("F[0,1] goal", {"goal": Circle((0.05, 1.0), 0.2)})
    episode = rollout(DYN, ConstantControl([0.0, 2.0]), [0.0, 0.0, 0.0, 0.0], 1.0, 0.1, "rk4")
    score_episode(episode, formula, beta=0.5, cost_coeff=0.01)
    assert episode.satisfied is True
    assert episode.robustness.value > 0.0
    assert episode.cost.value == pytest.approx(0.01 * 0.1 * 10 * 4.0)
    assert episode.objective.value == pytest.approx(episode.robustness.value - episode.cost.value)
    assert episode_objective(episode) is episode.objective


@pytest.mark.unit
def test_unscored_episode_has_no_objective():
    episode = rollout(DYN, ConstantControl([0.0, 0.0]), [0.0, 0.0, 0.0, 0.0], 0.2, 0.1)
    with pytest.raises(ValueError):
        episode_objective(episode)
    with pytest.raises(ValueError):
        objective([])


@pytest.mark.unit
def test_objective_on_separate_tapes_is_a_constant_mean(small_scenario):
    problem = prepare(small_scenario)
    controller = make_controller(problem, "fcnet", seed=2)
    cfg = small_scenario.train
    starts = [DYN.rest_state(0.1, 0.1), DYN.rest_state(0.3, 0.2)]
    batch = [run_episode(controller, problem.formula, problem.dynamics, x0, cfg) for x0 in starts]
    mean = objective(batch)
    assert mean.is_constant
    assert mean.value == pytest.approx(np.mean([e.objective.value for e in batch]))
    assert all(len(e.trajectory) == 11 for e in batch)


@pytest.mark.unit
def test_objective_on_a_shared_tape_is_recorded():
    formula = parse("F[0,0.5] goal", {"goal": Circle((0.0, 1.0), 0.5)})
    tape = Tape()
    batch = []
    for u in ([0.0, 1.0], [0.5, 2.0]):
        episode = rollout(DYN, ConstantControl(u, tape), [0.0, 0.0, 0.0, 0.0], 0.5, 0.1, tape=tape)
        batch.append(score_episode(episode, formula, 0.5, 0.003))
    mean = objective(batch)
    assert not mean.is_constant
    assert mean.value == pytest.approx((batch[0].objective.value + batch[1].objective.value) / 2)
    assert tape.backward(mean)[batch[0].trajectory.controls[0][1]] != 0.0


@pytest.mark.unit
def test_run_episode_records_gradients_for_the_networks(small_scenario):
    problem = prepare(small_scenario)
    controller = make_controller(problem, "barriernet", seed=2)
    episode = run_episode(controller, problem.formula, problem.dynamics, DYN.rest_state(0.2, 0.1), small_scenario.train)
    grads = episode.controller.gradients(episode.tape.backward(episode.objective))
    assert set(grads) == set(controller.parameters())
    assert any(np.any(g != 0.0) for g in grads.values())
    assert set(episode.barrier_values[0]) == {"F0:reg1", "G1:!obs1"}
