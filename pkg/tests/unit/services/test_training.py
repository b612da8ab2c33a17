"""
Tests for the training and evaluation loops.

Tests verify:
- Philox streams are deterministic and independent
- Training is reproducible for a fixed seed and moves the parameters
- Evaluation shares initial states across methods for equal seeds
- Checkpoints restore the trained weights and reject mismatched shapes
"""

import numpy as np
import pytest

from barrierstl.core.exceptions import CheckpointMismatchError
from barrierstl.models.checkpoint import NetworkState
from barrierstl.services.simulation import run_episode
from barrierstl.services.training import (
    EVAL_STREAM,
    batch_gradient,
    evaluate,
    from_checkpoint,
    make_controller,
    philox,
    prepare,
    sample_initial_states,
    to_checkpoint,
    train,
)


@pytest.fixture
def problem(small_scenario):
    return prepare(small_scenario)


def _curve_without_timing(result):
    return [
        (p.iteration, p.mean_robustness, p.mean_objective, p.min_robustness, p.satisfaction_rate) for p in result.curve
    ]


# ============================================================================
# Randomness
# ============================================================================


@pytest.mark.unit
def test_philox_streams_are_reproducible_and_distinct():
    a = philox(7, 0).uniform(size=5)
    assert np.array_equal(a, philox(7, 0).uniform(size=5))
    assert not np.array_equal(a, philox(7, 1).uniform(size=5))
    assert not np.array_equal(a, philox(8, 0).uniform(size=5))


@pytest.mark.unit
def test_initial_states_lie_in_the_box_at_rest(problem, assert_helpers):
    states = sample_initial_states(problem.scenario.init, problem.dynamics, 50, 3, EVAL_STREAM)
    assert len(states) == 50
    for x in states:
        assert_helpers.assert_between(x[0], 0.0, 0.4)
        assert_helpers.assert_between(x[1], 0.0, 0.4)
        assert x[2:].tolist() == [0.0, 0.0]


# ============================================================================
# Problem and controllers
# ============================================================================


@pytest.mark.unit
def test_prepare_builds_one_barrier_per_predicate(problem):
    assert {s.label for s in problem.specs} == {"F0:reg1", "G1:!obs1"}
    assert problem.reference_state.tolist() == [0.2, 0.2, 0.0, 0.0]


@pytest.mark.unit
def test_equal_seeds_give_equal_initial_weights(problem):
    a = make_controller(problem, "barriernet", seed=4).parameters()
    b = make_controller(problem, "barriernet", seed=4).parameters()
    c = make_controller(problem, "barriernet", seed=5).parameters()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not all(np.array_equal(a[k], c[k]) for k in a)


@pytest.mark.unit
def test_unknown_mode_is_rejected(problem):
    with pytest.raises(ValueError, match="unknown mode"):
        make_controller(problem, "mpc")


@pytest.mark.unit
def test_batch_gradient_is_the_mean_of_episode_gradients(problem):
    controller = make_controller(problem, "fcnet", seed=1)
    cfg = problem.scenario.train
    starts = sample_initial_states(problem.scenario.init, problem.dynamics, 2, 1, 0)
    batch = [run_episode(controller, problem.formula, problem.dynamics, x0, cfg) for x0 in starts]
    per_episode = [e.controller.gradients(e.tape.backward(e.objective)) for e in batch]
    mean = batch_gradient(batch)
    for name in controller.parameters():
        np.testing.assert_allclose(mean[name], (per_episode[0][name] + per_episode[1][name]) / 2)


# ============================================================================
# Training
# ============================================================================


@pytest.mark.unit
@pytest.mark.slow
@pytest.mark.parametrize("mode", ["barriernet", "fcnet"])
def test_training_is_reproducible(problem, mode):
    first = train(problem, mode)
    second = train(problem, mode)
    assert len(first.curve) == problem.scenario.train.iterations
    assert _curve_without_timing(first) == _curve_without_timing(second)
    for name, value in first.controller.parameters().items():
        np.testing.assert_array_equal(value, second.controller.parameters()[name])


@pytest.mark.unit
def test_training_moves_the_parameters(problem):
    initial = {k: v.copy() for k, v in make_controller(problem, "fcnet").parameters().items()}
    result = train(problem, "fcnet")
    assert any(not np.array_equal(initial[k], v) for k, v in result.controller.parameters().items())
    assert all(0.0 <= p.satisfaction_rate <= 1.0 for p in result.curve)
    assert 0 <= result.violations <= 2 * len(result.curve)


@pytest.mark.unit
def test_fixed_baseline_cannot_be_trained(problem):
    with pytest.raises(ValueError, match="cannot be trained"):
        train(problem, "fixed_hocbf")


# ============================================================================
# Evaluation
# ============================================================================


@pytest.mark.unit
def test_evaluation_without_trials_has_no_statistics(problem):
    report = evaluate(problem, make_controller(problem, "fcnet"), 0, seed=1)
    assert report.trials == 0
    assert report.satisfaction_rate is None
    assert report.summary()["mean_robustness"] is None


@pytest.mark.unit
def test_methods_share_initial_states_for_equal_seeds(problem):
    fcnet = evaluate(problem, make_controller(problem, "fcnet"), 3, seed=9)
    fixed = evaluate(problem, make_controller(problem, "fixed_hocbf"), 3, seed=9)
    assert fcnet.method == "fcnet"
    assert fixed.method == "fixed_hocbf"
    for a, b in zip(fcnet.episodes, fixed.episodes, strict=True):
        np.testing.assert_array_equal(a.x0, b.x0)
    assert 0.0 <= fcnet.satisfaction_rate <= 1.0
    assert fcnet.mean_cost >= 0.0
    assert set(fcnet.summary()) == {
        "method",
        "trials",
        "satisfaction_rate",
        "mean_robustness",
        "mean_cost",
        "mean_step_us",
    }


# ============================================================================
# Checkpoints
# ============================================================================


@pytest.mark.unit
def test_checkpoint_restores_trained_weights(problem):
    cfg = problem.scenario.train
    result = train(problem, "barriernet")
    checkpoint = to_checkpoint(problem, result, cfg)
    assert checkpoint.iterations == cfg.iterations
    assert set(checkpoint.networks) == {"initnet", "refnet"}
    restored = from_checkpoint(problem, checkpoint)
    for name, value in result.controller.parameters().items():
        np.testing.assert_allclose(restored.parameters()[name], value)


@pytest.mark.unit
def test_checkpoint_with_other_widths_is_rejected(problem):
    result = train(problem, "fcnet")
    checkpoint = to_checkpoint(problem, result, problem.scenario.train)
    rng = np.random.default_rng(0)
    params = {"W0": rng.normal(size=(3, 4)), "b0": np.zeros(3), "W1": rng.normal(size=(2, 3)), "b1": np.zeros(2)}
    broken = checkpoint.model_copy(update={"networks": {"refnet": NetworkState.from_arrays((4, 3, 2), params)}})
    with pytest.raises(CheckpointMismatchError):
        from_checkpoint(problem, broken)


@pytest.mark.unit
def test_barriernet_checkpoint_needs_both_networks(problem):
    checkpoint = to_checkpoint(problem, train(problem, "barriernet"), problem.scenario.train)
    partial = checkpoint.model_copy(update={"networks": {"refnet": checkpoint.networks["refnet"]}})
    with pytest.raises(CheckpointMismatchError, match="initnet"):
        from_checkpoint(problem, partial)
