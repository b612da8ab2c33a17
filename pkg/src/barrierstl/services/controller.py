"""
BarrierNet controller.

At t = 0 the InitNet maps x₀ to raw outputs that the ledger squashes into γ
parameters Ω, and to the class-K scales P of every ψ chain

    ψ₀ = b,   ψ_i = ψ̇_{i−1} + p_i·ψ_{i−1}.

Every step the RefNet proposes a reference control u_ref; the QP

    minimize ½uᵀQu + Fᵀu,  F = −Q·u_ref,
    subject to  a_j·u + r_j ≥ 0  for every barrier j not yet deleted

returns the control. ``FcNetController`` applies u_ref directly and
``FixedHocbfController`` keeps random feasible Ω, P with F = 0.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from barrierstl.core.autodiff import Gradient, Operand, Tape, TapeScalar, as_scalar, constant, maximum, softplus
from barrierstl.core.exceptions import ConstructionCheckError, QpInfeasibleError, UnsupportedRelativeDegreeError
from barrierstl.models.barrier import GammaParams, HocbfSpec, PredicateCategory
from barrierstl.models.dynamics import Dynamics
from barrierstl.models.formula import Formula
from barrierstl.models.scenario import SynthesisConfig
from barrierstl.services.hocbf import DeletionTracker, OmegaLedger, check_categories
from barrierstl.services.network import BoundMlp, Mlp
from barrierstl.services.qp import QpSolution, solve_layer

logger = logging.getLogger(__name__)

State = Sequence[Operand]
PSI_TOL = 1e-9


@dataclass(frozen=True)
class ConstraintRow:
    """Barrier inequality a·u + r ≥ 0."""

    a: tuple[TapeScalar, ...]
    r: TapeScalar


@dataclass
class ControllerState:
    """Episode-fixed Ω and P plus the episode's deletion flags."""

    specs: tuple[HocbfSpec, ...]
    dynamics: Dynamics
    gammas: dict[int, GammaParams]
    scales: dict[int, tuple[TapeScalar, ...]]
    tracker: DeletionTracker
    intervals: dict[int, dict[str, tuple[float, float]]] = field(default_factory=dict)

    def active(self) -> list[HocbfSpec]:
        return self.tracker.active()


def p_count(specs: Sequence[HocbfSpec]) -> int:
    """Number of class-K scales over all specs."""
    return sum(s.relative_degree for s in specs)


def barrier(spec: HocbfSpec, gamma: GammaParams, x: State, dynamics: Dynamics, t: float) -> TapeScalar:
    """b(x, t) = h(x) + γ(t)."""
    i, j = dynamics.position_indices
    return spec.shape.h((x[i], x[j])) + gamma.value(t)


def _chain(
    spec: HocbfSpec, gamma: GammaParams, x: State, dynamics: Dynamics, t: float
) -> tuple[list[TapeScalar], tuple[TapeScalar, ...]]:
    """Time derivatives of b along the drift, [b, ḃ_f, …, b_f^(m)], and the control gain."""
    lie = dynamics.lie_terms(spec.shape, x)
    m = lie.relative_degree
    if m != spec.relative_degree or m not in (1, 2):
        raise UnsupportedRelativeDegreeError(f"relative degree {m} of {spec.label} is not supported")
    drift = [lie.drift[0] + gamma.value(t), lie.drift[1] + gamma.rate(t)]
    if m == 2:
        drift.append(lie.drift[2] + gamma.curvature(t))
    return drift, lie.gain


def psi_values(
    spec: HocbfSpec, gamma: GammaParams, scales: Sequence[Operand], x: State, dynamics: Dynamics, t: float
) -> list[TapeScalar]:
    """ψ₀ … ψ_{m−1} at (x, t); the highest level depends on u and is not included."""
    drift, _ = _chain(spec, gamma, x, dynamics, t)
    psi = [drift[0]]
    if spec.relative_degree == 2:
        psi.append(drift[1] + scales[0] * drift[0])
    return psi


def constraint_row(spec: HocbfSpec, state: ControllerState, x: State, t: float) -> ConstraintRow:
    """Linear-in-u form of ψ_m(x, t, u) ≥ 0 for ``spec``."""
    gamma, p = state.gammas[spec.index], state.scales[spec.index]
    drift, gain = _chain(spec, gamma, x, state.dynamics, t)
    if spec.relative_degree == 1:
        r = drift[1] + p[0] * drift[0]
    else:
        psi1 = drift[1] + p[0] * drift[0]
        r = drift[2] + p[0] * drift[1] + p[1] * psi1
    return ConstraintRow(tuple(gain), r)


def _squash_scales(
    spec: HocbfSpec, gamma: GammaParams, raw: Sequence[Operand], x0: State, dynamics: Dynamics, margin: float
) -> tuple[TapeScalar, ...]:
    """p_i > max(−ψ̇_{i−1}/ψ_{i−1}, 0) for i < m and p_m > 0, each with ``margin``."""
    if spec.relative_degree == 1:
        return (margin + softplus(raw[0]),)
    drift, _ = _chain(spec, gamma, x0, dynamics, 0.0)
    psi0, psi0_dot = drift[0], drift[1]
    if psi0.value > 0.0:
        lo = maximum(-psi0_dot / psi0, 0.0) + margin
    elif psi0_dot.value >= 0.0:
        lo = constant(margin)
    else:
        raise ConstructionCheckError(
            f"{spec.label}: psi_0(x0, 0) = {psi0.value:.6g} with negative rate {psi0_dot.value:.6g}",
            spec=spec.label,
        )
    return (lo + softplus(raw[0]), margin + softplus(raw[1]))


def init_episode(
    x0: State,
    raw: Sequence[Operand],
    ledger: OmegaLedger,
    dynamics: Dynamics,
    margin: float | None = None,
) -> ControllerState:
    """
    Fix Ω and P for one episode from InitNet outputs ``raw``.

    ``raw`` holds ``ledger.raw_size`` γ entries followed by the class-K
    entries of every spec in spec order.
    """
    specs = ledger.specs
    margin = ledger.synthesis.margin if margin is None else margin
    x0_values = np.array([as_scalar(v).value for v in x0])
    expected = ledger.raw_size + p_count(specs)
    if len(raw) != expected:
        raise ValueError(f"InitNet produced {len(raw)} outputs, expected {expected}")
    squashed = ledger.squash(raw[: ledger.raw_size], x0_values, dynamics.position_indices)

    scales: dict[int, tuple[TapeScalar, ...]] = {}
    offset = ledger.raw_size
    for spec in specs:
        m = spec.relative_degree
        scales[spec.index] = _squash_scales(
            spec, squashed.gammas[spec.index], raw[offset : offset + m], x0, dynamics, margin
        )
        offset += m

    violations = ledger.violations(x0_values, squashed.gammas, dynamics.position_indices)
    if violations:
        raise ConstructionCheckError(
            f"squashed parameters violate {len(violations)} ledger constraint(s): {violations[0]}",
            violations=[v.__dict__ for v in violations],
        )
    for spec in specs:
        psi = psi_values(spec, squashed.gammas[spec.index], scales[spec.index], x0, dynamics, 0.0)
        worst = min(v.value for v in psi)
        if worst < -PSI_TOL:
            raise ConstructionCheckError(f"{spec.label}: psi(x0, 0) = {worst:.3e} < 0", spec=spec.label)
    return ControllerState(specs, dynamics, squashed.gammas, scales, DeletionTracker(specs), squashed.intervals)


def step(
    state: ControllerState,
    x: State,
    t: float,
    u_ref: Sequence[Operand],
    Q: np.ndarray | None = None,
    relax: bool = False,
) -> tuple[list[TapeScalar], QpSolution]:
    """Solve the barrier QP for the reference control ``u_ref``."""
    q = len(u_ref)
    Q = np.eye(q) if Q is None else np.asarray(Q, dtype=float)
    F = [-sum((Q[i, j] * as_scalar(u_ref[j]) for j in range(q)), constant(0.0)) for i in range(q)]
    rows = [constraint_row(spec, state, x, t) for spec in state.active()]
    return solve_layer(Q, F, [row.a for row in rows], [-row.r for row in rows], relax=relax)


def fcnet_step(x: State, refnet: Mlp | BoundMlp) -> list[TapeScalar]:
    """Reference control used as-is."""
    return refnet(x)


# ============================================================================
# Controllers
# ============================================================================


class EpisodeController:
    """Per-episode controller bound to one tape."""

    def act(self, x: State, t: float) -> list[TapeScalar]:
        raise NotImplementedError

    def advance(self, x_next: State, t_next: float) -> None:
        """Bookkeeping after the state has advanced."""

    def barrier_values(self, x: State, t: float) -> dict[str, float]:
        return {}

    def gradients(self, grad: Gradient) -> dict[str, np.ndarray]:
        return {}


class Controller:
    """A control policy that can be started on an episode."""

    mode: str

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def episode(self, tape: Tape, x0: np.ndarray) -> EpisodeController:
        raise NotImplementedError


class FcNetController(Controller):
    """RefNet output applied directly, without a safety layer."""

    mode = "fcnet"

    def __init__(self, refnet: Mlp) -> None:
        self.refnet = refnet

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"ref.{k}": v for k, v in self.refnet.params.items()}

    def episode(self, tape: Tape, x0: np.ndarray) -> EpisodeController:
        return _FcNetEpisode(self.refnet.bind(tape))


class _FcNetEpisode(EpisodeController):
    def __init__(self, refnet: BoundMlp) -> None:
        self.refnet = refnet

    def act(self, x: State, t: float) -> list[TapeScalar]:
        return fcnet_step(x, self.refnet)

    def gradients(self, grad: Gradient) -> dict[str, np.ndarray]:
        return {f"ref.{k}": v for k, v in self.refnet.gradients(grad).items()}


class BarrierNetController(Controller):
    """InitNet + RefNet + barrier QP."""

    mode = "barriernet"

    def __init__(
        self,
        formula: Formula,
        ledger: OmegaLedger,
        categories: Sequence[PredicateCategory],
        dynamics: Dynamics,
        initnet: Mlp | None,
        refnet: Mlp | None,
        synthesis: SynthesisConfig | None = None,
        Q: np.ndarray | None = None,
        relax: bool = False,
    ) -> None:
        self.formula = formula
        self.ledger = ledger
        self.categories = tuple(categories)
        self.dynamics = dynamics
        self.initnet = initnet
        self.refnet = refnet
        self.synthesis = synthesis or ledger.synthesis
        self.Q = np.eye(dynamics.q) if Q is None else np.asarray(Q, dtype=float)
        self.relax = relax

    @property
    def init_outputs(self) -> int:
        return self.ledger.raw_size + p_count(self.ledger.specs)

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        if self.initnet is not None:
            params |= {f"init.{k}": v for k, v in self.initnet.params.items()}
        if self.refnet is not None:
            params |= {f"ref.{k}": v for k, v in self.refnet.params.items()}
        return params

    def _raw(self, tape: Tape, x0: list[TapeScalar]) -> tuple[list[TapeScalar], BoundMlp | None]:
        bound = self.initnet.bind(tape)
        return bound(x0), bound

    def episode(self, tape: Tape, x0: np.ndarray) -> EpisodeController:
        check_categories(self.formula, x0, self.categories, self.dynamics.position_indices)
        x0_s = [constant(v) for v in x0]
        raw, initnet = self._raw(tape, x0_s)
        state = init_episode(x0_s, raw, self.ledger, self.dynamics, self.synthesis.margin)
        refnet = self.refnet.bind(tape) if self.refnet is not None else None
        return _BarrierNetEpisode(self, state, initnet, refnet)


class FixedHocbfController(BarrierNetController):
    """Random feasible Ω and P, zero reference control; nothing is trained."""

    mode = "fixed_hocbf"

    def __init__(
        self,
        formula: Formula,
        ledger: OmegaLedger,
        categories: Sequence[PredicateCategory],
        dynamics: Dynamics,
        rng: np.random.Generator,
        relax: bool = False,
    ) -> None:
        super().__init__(formula, ledger, categories, dynamics, None, None, relax=relax)
        self.raw = rng.standard_normal(self.init_outputs)

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def _raw(self, tape: Tape, x0: list[TapeScalar]) -> tuple[list[TapeScalar], BoundMlp | None]:
        return [constant(v) for v in self.raw], None


class _BarrierNetEpisode(EpisodeController):
    def __init__(
        self,
        controller: BarrierNetController,
        state: ControllerState,
        initnet: BoundMlp | None,
        refnet: BoundMlp | None,
    ) -> None:
        self.controller = controller
        self.state = state
        self.initnet = initnet
        self.refnet = refnet
        self.step_index = 0
        self.solutions: list[QpSolution] = []

    def act(self, x: State, t: float) -> list[TapeScalar]:
        q = self.controller.dynamics.q
        u_ref = self.refnet(x) if self.refnet is not None else [constant(0.0)] * q
        try:
            u, solution = step(self.state, x, t, u_ref, self.controller.Q, self.controller.relax)
        except QpInfeasibleError as exc:
            raise exc.at_step(self.step_index) from exc
        self.solutions.append(solution)
        self.step_index += 1
        return u

    def advance(self, x_next: State, t_next: float) -> None:
        i, j = self.controller.dynamics.position_indices
        self.state.tracker.update((as_scalar(x_next[i]).value, as_scalar(x_next[j]).value), t_next)

    def barrier_values(self, x: State, t: float) -> dict[str, float]:
        return {
            spec.label: barrier(spec, self.state.gammas[spec.index], x, self.controller.dynamics, t).value
            for spec in self.state.active()
        }

    def gradients(self, grad: Gradient) -> dict[str, np.ndarray]:
        out = {}
        if self.initnet is not None:
            out |= {f"init.{k}": v for k, v in self.initnet.gradients(grad).items()}
        if self.refnet is not None:
            out |= {f"ref.{k}": v for k, v in self.refnet.gradients(grad).items()}
        return out
