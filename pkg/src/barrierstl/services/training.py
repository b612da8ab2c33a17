"""
Training and evaluation loops.

Each iteration draws V fresh initial states from the Init box (zero
velocity), rolls every episode out on its own tape, and ascends the batch
mean of ρ − J with Adam. The gradient of the mean is the mean of the
per-episode gradients.

Randomness comes from counter-based Philox generators keyed by
(seed, stream), so every iteration and every evaluation draws from an
independent, platform-independent stream.
"""

import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from barrierstl.core.exceptions import CheckpointMismatchError
from barrierstl.models.barrier import HocbfSpec, PredicateCategory
from barrierstl.models.checkpoint import Checkpoint, NetworkState
from barrierstl.models.dynamics import Dynamics, get_dynamics
from barrierstl.models.formula import Formula
from barrierstl.models.scenario import InitBox, ScenarioConfig, TrainConfig
from barrierstl.services.controller import BarrierNetController, Controller, FcNetController, FixedHocbfController
from barrierstl.services.hocbf import OmegaLedger, build_ledger, categorize
from barrierstl.services.network import Mlp
from barrierstl.services.optim import Adam, adam_update
from barrierstl.services.simulation import Episode, objective, run_episode
from barrierstl.services.stl import parse

logger = logging.getLogger(__name__)

MODES = ("barriernet", "fcnet", "fixed_hocbf")
TRAINABLE_MODES = ("barriernet", "fcnet")
NETWORK_STREAM = 1 << 40
EVAL_STREAM = 1 << 41
BASELINE_STREAM = 1 << 42


def philox(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for (seed, stream)."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


def sample_initial_states(
    init: InitBox, dynamics: Dynamics, count: int, seed: int, stream: int
) -> list[np.ndarray]:
    """``count`` states uniform over the Init box, at rest."""
    rng = philox(seed, stream)
    points = rng.uniform(np.asarray(init.lo), np.asarray(init.hi), size=(count, 2))
    return [dynamics.rest_state(px, py) for px, py in points]


@dataclass(frozen=True)
class Problem:
    """Everything derived from a scenario before any network exists."""

    scenario: ScenarioConfig
    formula: Formula
    dynamics: Dynamics
    categories: tuple[PredicateCategory, ...]
    ledger: OmegaLedger
    specs: tuple[HocbfSpec, ...]

    @property
    def reference_state(self) -> np.ndarray:
        return self.dynamics.rest_state(*self.scenario.init.center)


def prepare(scenario: ScenarioConfig) -> Problem:
    """Parse the formula, categorize at the Init center and build the ledger."""
    formula = parse(scenario.formula, scenario.shape_table())
    dynamics = get_dynamics(scenario.dynamics)
    x_ref = dynamics.rest_state(*scenario.init.center)
    categories = categorize(formula, x_ref, dynamics.position_indices)
    ledger, specs = build_ledger(formula, categories, dynamics, scenario.synthesis, x_ref)
    logger.info(
        "Synthesized %d HOCBFs (%s) with %d gamma parameters",
        len(specs),
        ", ".join(f"{s.label}:{s.category.value}" for s in specs),
        ledger.raw_size,
    )
    return Problem(scenario, formula, dynamics, tuple(categories), ledger, tuple(specs))


def make_controller(problem: Problem, mode: str, seed: int | None = None) -> Controller:
    """Fresh controller of ``mode`` with seeded initial weights."""
    cfg = problem.scenario.train
    seed = cfg.seed if seed is None else seed
    rng = philox(seed, NETWORK_STREAM)
    n, q = problem.dynamics.n, problem.dynamics.q
    if mode == "fixed_hocbf":
        return FixedHocbfController(
            problem.formula,
            problem.ledger,
            problem.categories,
            problem.dynamics,
            philox(seed, BASELINE_STREAM),
            relax=cfg.relax_infeasible_qp,
        )
    refnet = Mlp((n, *cfg.hidden, q), rng=rng)
    if mode == "fcnet":
        return FcNetController(refnet)
    if mode != "barriernet":
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    controller = BarrierNetController(
        problem.formula,
        problem.ledger,
        problem.categories,
        problem.dynamics,
        None,
        refnet,
        problem.scenario.synthesis,
        relax=cfg.relax_infeasible_qp,
    )
    controller.initnet = Mlp((n, *cfg.hidden, controller.init_outputs), rng=rng)
    return controller


def batch_gradient(batch: Sequence[Episode]) -> dict[str, np.ndarray]:
    """Mean over episodes of ∂(ρ − J)/∂θ, each taken on the episode's own tape."""
    total: dict[str, np.ndarray] = {}
    for episode in batch:
        grads = episode.controller.gradients(episode.tape.backward(episode.objective))
        for name, g in grads.items():
            total[name] = total[name] + g if name in total else g
    return {name: g / len(batch) for name, g in total.items()}


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    mean_robustness: float
    mean_objective: float
    min_robustness: float
    wall_ms: float
    satisfaction_rate: float


@dataclass
class TrainResult:
    controller: Controller
    curve: list[CurvePoint] = field(default_factory=list)
    violations: int = 0


def train(problem: Problem, mode: str = "barriernet", cfg: TrainConfig | None = None) -> TrainResult:
    """Optimize the controller of ``mode`` for ``cfg.iterations`` Adam steps."""
    if mode not in TRAINABLE_MODES:
        raise ValueError(f"mode {mode!r} cannot be trained")
    cfg = cfg or problem.scenario.train
    controller = make_controller(problem, mode, cfg.seed)
    params = controller.parameters()
    adam = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    result = TrainResult(controller)
    logger.info("Training %s: %d iterations of %d episodes", mode, cfg.iterations, cfg.batch_size)
    for iteration in range(cfg.iterations):
        started = time.perf_counter()
        states = sample_initial_states(problem.scenario.init, problem.dynamics, cfg.batch_size, cfg.seed, iteration)
        batch = [run_episode(controller, problem.formula, problem.dynamics, x0, cfg) for x0 in states]
        mean = objective(batch).value
        adam_update(params, batch_gradient(batch), adam)
        rhos = [e.robustness.value for e in batch]
        satisfied = sum(bool(e.satisfied) for e in batch)
        result.violations += len(batch) - satisfied
        point = CurvePoint(
            iteration=iteration,
            mean_robustness=float(np.mean(rhos)),
            mean_objective=mean,
            min_robustness=float(np.min(rhos)),
            wall_ms=(time.perf_counter() - started) * 1e3,
            satisfaction_rate=satisfied / len(batch),
        )
        result.curve.append(point)
        if mode == "barriernet" and satisfied < len(batch):
            logger.warning("Iteration %d: %d episode(s) violate the formula", iteration, len(batch) - satisfied)
        if iteration % cfg.log_every == 0 or iteration == cfg.iterations - 1:
            logger.info(
                "iter %4d  mean rho %+.4f  min rho %+.4f  objective %+.4f  (%.0f ms)",
                iteration,
                point.mean_robustness,
                point.min_robustness,
                point.mean_objective,
                point.wall_ms,
            )
    return result


@dataclass
class EvalReport:
    method: str
    trials: int
    satisfaction_rate: float | None
    mean_robustness: float | None
    mean_cost: float | None
    mean_step_us: float | None
    episodes: list[Episode] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "trials": self.trials,
            "satisfaction_rate": self.satisfaction_rate,
            "mean_robustness": self.mean_robustness,
            "mean_cost": self.mean_cost,
            "mean_step_us": self.mean_step_us,
        }


def evaluate(
    problem: Problem,
    controller: Controller,
    n_trials: int,
    seed: int,
    integrator: str | None = None,
) -> EvalReport:
    """Monte-Carlo evaluation on ``n_trials`` fresh initial states; equal seeds share draws across methods."""
    cfg = problem.scenario.train
    states = sample_initial_states(problem.scenario.init, problem.dynamics, n_trials, seed, EVAL_STREAM)
    episodes = [run_episode(controller, problem.formula, problem.dynamics, x0, cfg, integrator) for x0 in states]
    if not episodes:
        return EvalReport(controller.mode, 0, None, None, None, None)
    report = EvalReport(
        method=controller.mode,
        trials=len(episodes),
        satisfaction_rate=sum(bool(e.satisfied) for e in episodes) / len(episodes),
        mean_robustness=float(np.mean([e.robustness.value for e in episodes])),
        mean_cost=float(np.mean([e.cost.value for e in episodes])),
        mean_step_us=float(np.mean([e.mean_step_seconds for e in episodes])) * 1e6,
        episodes=episodes,
    )
    logger.info(
        "Evaluated %s on %d trials: satisfaction %.3f, mean rho %+.4f, mean J %.4f, %.0f us/step",
        report.method,
        report.trials,
        report.satisfaction_rate,
        report.mean_robustness,
        report.mean_cost,
        report.mean_step_us,
    )
    return report


# ============================================================================
# Checkpoints
# ============================================================================


def _networks(controller: Controller) -> dict[str, Mlp]:
    nets = {}
    for name in ("initnet", "refnet"):
        net = getattr(controller, name, None)
        if isinstance(net, Mlp):
            nets[name] = net
    return nets


def to_checkpoint(problem: Problem, result: TrainResult, cfg: TrainConfig) -> Checkpoint:
    controller = result.controller
    return Checkpoint(
        mode=controller.mode,
        config_hash=problem.scenario.config_hash(),
        seed=cfg.seed,
        iterations=len(result.curve),
        networks={
            name: NetworkState.from_arrays(net.widths, net.params) for name, net in _networks(controller).items()
        },
    )


def from_checkpoint(problem: Problem, checkpoint: Checkpoint) -> Controller:
    """Rebuild the trained controller; network shapes must match the scenario."""
    controller = make_controller(problem, checkpoint.mode, checkpoint.seed)
    for name, net in _networks(controller).items():
        if name not in checkpoint.networks:
            raise CheckpointMismatchError(f"checkpoint lacks network {name!r}")
        state = checkpoint.networks[name]
        if tuple(state.widths) != net.widths:
            raise CheckpointMismatchError(
                f"network {name!r} has widths {state.widths} in the checkpoint, scenario needs {list(net.widths)}"
            )
        for key, value in state.arrays().items():
            if key not in net.params or net.params[key].shape != value.shape:
                raise CheckpointMismatchError(f"parameter {name}.{key} does not match the scenario")
            net.params[key][...] = value
    return controller
