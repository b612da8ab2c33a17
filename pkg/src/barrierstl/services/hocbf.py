"""
HOCBF synthesis.

Compiles a fragment formula into one barrier template per predicate
occurrence and the ledger of bounds its γ parameters must satisfy:

- γ(0) > −h(x₀) so every barrier starts positive,
- *eventually*: γ(t_b) ≤ 0 and γ(t_a) > −sup h,
- *always*: γ(t_a) ≤ 0,
- pair constraints γ_j(t*) ≥ s_k·s_j·‖o_k − o_j‖ − γ_k(t*) − s_k·R_k − s_j·R_j
  that keep the regions of two circles compatible at the earlier deadline.

The ledger turns raw network outputs into parameters that satisfy every
bound (``OmegaLedger.squash``). Predicates are resolved in deadline order so
pair bounds only reference parameters that are already fixed; the bounds are
recorded on the tape so gradients reach every raw output.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from barrierstl.core.autodiff import Operand, TapeScalar, as_scalar, constant, ln, maximum, minimum, sigmoid, softplus
from barrierstl.core.exceptions import (
    CategoryInfeasibleError,
    CategoryMismatchError,
    LedgerInfeasibleError,
    UnsupportedRelativeDegreeError,
    UnsupportedShapeError,
)
from barrierstl.models.barrier import DeletionRule, GammaKind, GammaParams, HocbfSpec, PredicateCategory
from barrierstl.models.dynamics import Dynamics
from barrierstl.models.formula import Always, Eventually, Formula, NegPred, Pred, predicate_terms
from barrierstl.models.scenario import SynthesisConfig
from barrierstl.models.shapes import Circle, Shape

logger = logging.getLogger(__name__)

RAW_PER_GAMMA = 2
_TIME_TOL = 1e-12
_CHECK_TOL = 1e-9


def _position(x0: Sequence[float] | np.ndarray, position_indices: tuple[int, int]) -> tuple[float, float]:
    return float(x0[position_indices[0]]), float(x0[position_indices[1]])


def _effective_shape(term: Pred | NegPred) -> Shape:
    return term.effective_shape if isinstance(term, NegPred) else term.shape


# ============================================================================
# Categories
# ============================================================================


def categorize(
    formula: Formula,
    x0: Sequence[float] | np.ndarray,
    position_indices: tuple[int, int] = (0, 1),
) -> list[PredicateCategory]:
    """Category of every predicate occurrence, in ``predicate_terms`` order."""
    px, py = _position(x0, position_indices)
    categories = []
    for node, term, position in predicate_terms(formula):
        h0 = _effective_shape(term).h_value(px, py)
        if h0 >= 0.0 and node.t_a == 0.0:
            categories.append(PredicateCategory.I)
        elif isinstance(node, Eventually):
            categories.append(PredicateCategory.II)
        elif node.t_a == 0.0:
            raise CategoryInfeasibleError(
                f"predicate {term.name!r} must hold on [0, {node.t_b:g}] but h(x0) = {h0:.6g} < 0",
                predicate=term.name,
                operator=position,
                h0=h0,
            )
        else:
            categories.append(PredicateCategory.III)
    return categories


def check_categories(
    formula: Formula,
    x0: Sequence[float] | np.ndarray,
    declared: Sequence[PredicateCategory],
    position_indices: tuple[int, int] = (0, 1),
) -> None:
    """Raise when ``x0`` yields categories other than ``declared``."""
    actual = categorize(formula, x0, position_indices)
    if list(actual) != list(declared):
        diff = [
            f"{term.name}: declared {d.value}, got {a.value}"
            for (_, term, _), d, a in zip(predicate_terms(formula), declared, actual, strict=True)
            if d is not a
        ]
        raise CategoryMismatchError(
            f"initial state {np.asarray(x0).tolist()} changes predicate categories ({'; '.join(diff)})",
            x0=np.asarray(x0, dtype=float).tolist(),
            mismatches=diff,
        )


def sup_h(shape: Shape) -> float:
    """Supremum of h over the plane: R for a reach circle, +inf for an avoid circle."""
    if not isinstance(shape, Circle):
        raise UnsupportedShapeError(f"sup h is only available for circles, got {type(shape).__name__}")
    return shape.radius if shape.sign > 0 else math.inf


# ============================================================================
# Ledger
# ============================================================================


@dataclass(frozen=True)
class PairConstraint:
    """γ_target(t*) ≥ offset − γ_partner(t*); the partner γ is zero for Category I partners."""

    target: int
    partner: int
    t_star: float
    offset: float
    released: bool = False

    def describe(self, specs: Sequence[HocbfSpec]) -> str:
        j, k = specs[self.target].label, specs[self.partner].label
        text = f"gamma[{j}]({self.t_star:g}) >= {self.offset:.6g} - gamma[{k}]({self.t_star:g})"
        return text + " (released)" if self.released else text


@dataclass(frozen=True)
class LedgerEntry:
    """Bounds of one Category II/III predicate."""

    spec: int
    kind: GammaKind
    t_a: float
    t_b: float
    sup_h: float
    pairs: tuple[PairConstraint, ...] = ()

    @property
    def active_pairs(self) -> tuple[PairConstraint, ...]:
        return tuple(p for p in self.pairs if not p.released)


@dataclass(frozen=True)
class LedgerViolation:
    spec: str
    constraint: str
    slack: float


@dataclass
class SquashedOmega:
    """γ parameters of every spec plus the intervals they were squashed into."""

    gammas: dict[int, GammaParams]
    intervals: dict[int, dict[str, tuple[float, float]]] = field(default_factory=dict)


class _Bounds:
    """Candidate bounds with labels, so an empty interval can name its culprit."""

    def __init__(self) -> None:
        self.values: list[TapeScalar] = []
        self.labels: list[str] = []

    def add(self, value: Operand, label: str) -> None:
        self.values.append(as_scalar(value))
        self.labels.append(label)

    def __bool__(self) -> bool:
        return bool(self.values)

    def lower(self) -> tuple[TapeScalar, str]:
        best = maximum(*self.values) if len(self.values) > 1 else self.values[0]
        return best, self.labels[[v.value for v in self.values].index(best.value)]

    def upper(self) -> tuple[TapeScalar, str]:
        best = minimum(*self.values) if len(self.values) > 1 else self.values[0]
        return best, self.labels[[v.value for v in self.values].index(best.value)]


def _interval(lo: TapeScalar, hi: Operand, raw: Operand) -> TapeScalar:
    return lo + (hi - lo) * sigmoid(raw)


class OmegaLedger:
    """All bounds on the γ parameters of a formula, in resolution order."""

    def __init__(self, specs: Sequence[HocbfSpec], entries: Sequence[LedgerEntry], synthesis: SynthesisConfig) -> None:
        self.specs = tuple(specs)
        self.entries = tuple(entries)
        self.synthesis = synthesis

    @property
    def raw_size(self) -> int:
        """Number of raw network outputs consumed by ``squash``."""
        return RAW_PER_GAMMA * len(self.entries)

    def h0(self, spec: int, x0: Sequence[float] | np.ndarray, position_indices: tuple[int, int] = (0, 1)) -> float:
        return self.specs[spec].shape.h_value(*_position(x0, position_indices))

    def _infeasible(self, entry: LedgerEntry, label: str, lo: float, hi: float) -> LedgerInfeasibleError:
        spec = self.specs[entry.spec]
        return LedgerInfeasibleError(
            f"empty interval for {spec.label}: {label} requires {lo:.6g} < {hi:.6g}",
            spec=spec.label,
            culprit=label,
            lower=lo,
            upper=hi,
        )

    def _pair_label(self, pair: PairConstraint) -> str:
        return f"pair with {self.specs[pair.partner].label}"

    def _pair_bound(self, pair: PairConstraint, gammas: Mapping[int, GammaParams]) -> TapeScalar:
        partner = gammas.get(pair.partner)
        partner_value = partner.value(pair.t_star) if partner is not None else constant(0.0)
        return pair.offset - partner_value

    def squash(
        self,
        raw: Sequence[Operand],
        x0: Sequence[float] | np.ndarray,
        position_indices: tuple[int, int] = (0, 1),
    ) -> SquashedOmega:
        """Map raw outputs (two per entry, in ledger order) onto parameters satisfying every bound."""
        if len(raw) != self.raw_size:
            raise ValueError(f"expected {self.raw_size} raw outputs, got {len(raw)}")
        gammas: dict[int, GammaParams] = {s.index: GammaParams.zero() for s in self.specs if not s.is_free}
        out = SquashedOmega(gammas)
        for n, entry in enumerate(self.entries):
            h0 = self.h0(entry.spec, x0, position_indices)
            r0, r1 = raw[RAW_PER_GAMMA * n], raw[RAW_PER_GAMMA * n + 1]
            if entry.kind is GammaKind.LINEAR:
                gammas[entry.spec], out.intervals[entry.spec] = self._squash_linear(entry, h0, r0, r1, gammas)
            else:
                gammas[entry.spec], out.intervals[entry.spec] = self._squash_exponential(entry, h0, r0, r1, gammas)
        return out

    def _squash_linear(
        self, entry: LedgerEntry, h0: float, r0: Operand, r1: Operand, gammas: Mapping[int, GammaParams]
    ) -> tuple[GammaParams, dict[str, tuple[float, float]]]:
        eps, kappa = self.synthesis.margin, self.synthesis.kappa
        lo0 = _Bounds()
        lo0.add(max(-h0, 0.0) + eps, "gamma(0) > -h(x0)")
        pair_terms = []
        for pair in entry.active_pairs:
            bound = self._pair_bound(pair, gammas)
            sigma = pair.t_star / entry.t_b
            pair_terms.append((pair, bound, sigma))
            if sigma < 1.0 - _TIME_TOL:
                lo0.add(bound / (1.0 - sigma) + eps, self._pair_label(pair))
        g0_lo, _ = lo0.lower()
        g0_hi = as_scalar(kappa * max(1.0, -h0))
        if g0_lo.value >= g0_hi.value:
            g0_hi = kappa * g0_lo
        g0 = _interval(g0_lo, g0_hi, r0)

        lob = _Bounds()
        tau = entry.t_a / entry.t_b
        if math.isfinite(entry.sup_h) and tau > 0.0:
            lob.add((eps - entry.sup_h - g0 * (1.0 - tau)) / tau, "gamma(t_a) > -sup h")
        for pair, bound, sigma in pair_terms:
            lob.add((bound - g0 * (1.0 - sigma)) / sigma, self._pair_label(pair))
        if lob:
            gb_lo, culprit = lob.lower()
            if gb_lo.value >= 0.0:
                raise self._infeasible(entry, culprit, gb_lo.value, 0.0)
            gb = gb_lo * (1.0 - sigmoid(r1))
            gb_interval = (gb_lo.value, 0.0)
        else:
            gb = -softplus(r1)
            gb_interval = (-math.inf, 0.0)
        intervals = {"gamma(0)": (g0_lo.value, g0_hi.value), "gamma(t_b)": gb_interval}
        return GammaParams.linear_from_anchors(g0, gb, entry.t_b), intervals

    def _squash_exponential(
        self, entry: LedgerEntry, h0: float, r0: Operand, r1: Operand, gammas: Mapping[int, GammaParams]
    ) -> tuple[GammaParams, dict[str, tuple[float, float]]]:
        eps, kappa, c = self.synthesis.margin, self.synthesis.kappa, self.synthesis.c
        t_a = entry.t_a
        lo1, hi1 = _Bounds(), _Bounds()
        lo1.add(max(c - h0, 0.0) + eps, "gamma(0) > -h(x0)")
        w2_caps = []
        for pair in entry.active_pairs:
            shifted = self._pair_bound(pair, gammas) + c
            if shifted.value <= 0.0:
                continue  # γ > −c everywhere, so the pair bound is vacuous
            label, t_star = self._pair_label(pair), pair.t_star
            w2_caps.append((shifted, t_star, label))
            lo1.add(shifted * math.exp(2.0 * eps * t_star + eps), label)
            if abs(t_star - t_a) <= _TIME_TOL:
                if shifted.value >= c * math.exp(-2.0 * eps * t_a):
                    raise self._infeasible(entry, label, shifted.value, c * math.exp(-2.0 * eps * t_a))
                continue
            slope = 1.0 / t_star - 1.0 / t_a
            threshold = (ln(shifted) / t_star - math.log(c) / t_a + 2.0 * eps) / slope
            if t_star < t_a:
                lo1.add((threshold + eps).exp(), label)
            else:
                hi1.add((threshold - eps).exp(), label)

        w1_lo, _ = lo1.lower()
        cap = as_scalar(kappa * max(1.0, c - h0))
        if hi1:
            w1_hi, culprit = hi1.upper()
            w1_hi = minimum(w1_hi, cap) if cap.value > w1_lo.value else w1_hi
            if w1_hi.value <= w1_lo.value:
                raise self._infeasible(entry, culprit, w1_lo.value, w1_hi.value)
        else:
            w1_hi = cap if cap.value > w1_lo.value else kappa * w1_lo
        w1 = _interval(w1_lo, w1_hi, r0)

        w2_lo = maximum(ln(w1 / c) / t_a, 0.0) + eps
        if w2_caps:
            caps = _Bounds()
            for shifted, t_star, label in w2_caps:
                caps.add(ln(w1 / shifted) / t_star - eps, label)
            w2_hi, culprit = caps.upper()
            if w2_hi.value <= w2_lo.value:
                raise self._infeasible(entry, culprit, w2_lo.value, w2_hi.value)
            w2 = _interval(w2_lo, w2_hi, r1)
            w2_interval = (w2_lo.value, w2_hi.value)
        else:
            w2 = w2_lo + softplus(r1)
            w2_interval = (w2_lo.value, math.inf)
        intervals = {"w1": (w1_lo.value, w1_hi.value), "w2": w2_interval}
        return GammaParams.exponential(w1, w2, c), intervals

    def violations(
        self,
        x0: Sequence[float] | np.ndarray,
        gammas: Mapping[int, GammaParams],
        position_indices: tuple[int, int] = (0, 1),
        tol: float = _CHECK_TOL,
    ) -> list[LedgerViolation]:
        """Evaluate every ledger constraint on concrete parameters; empty when all hold."""
        found: list[LedgerViolation] = []

        def check(spec: HocbfSpec, name: str, slack: float) -> None:
            if slack < -tol:
                found.append(LedgerViolation(spec.label, name, slack))

        for entry in self.entries:
            spec = self.specs[entry.spec]
            gamma = gammas[entry.spec]
            w1, w2 = gamma.parameters()
            h0 = self.h0(entry.spec, x0, position_indices)
            check(spec, "gamma(0) > -h(x0)", gamma.value_at(0.0) + h0)
            check(spec, "w1 > 0", w1)
            if entry.kind is GammaKind.LINEAR:
                check(spec, "w2 < 0", -w2)
                check(spec, "gamma(t_b) <= 0", -gamma.value_at(entry.t_b))
                if math.isfinite(entry.sup_h):
                    check(spec, "gamma(t_a) > -sup h", gamma.value_at(entry.t_a) + entry.sup_h)
            else:
                check(spec, "w2 > 0", w2)
                check(spec, "gamma(t_a) <= 0", -gamma.value_at(entry.t_a))
            for pair in entry.active_pairs:
                partner = gammas.get(pair.partner, GammaParams.zero()).value_at(pair.t_star)
                check(spec, pair.describe(self.specs), gamma.value_at(pair.t_star) + partner - pair.offset)
        return found

    def describe(self) -> list[dict]:
        """Human-readable summary of every spec and its constraints."""
        rows = []
        by_spec = {e.spec: e for e in self.entries}
        for spec in self.specs:
            row = {
                "spec": spec.label,
                "category": spec.category.value,
                "gamma": spec.gamma_kind.value,
                "relative_degree": spec.relative_degree,
                "window": [spec.t_a, spec.t_b],
                "deletion": spec.deletion.value,
                "constraints": [],
            }
            entry = by_spec.get(spec.index)
            if entry is not None:
                constraints = ["gamma(0) > -h(x0)"]
                if entry.kind is GammaKind.LINEAR:
                    constraints.append(f"gamma({entry.t_b:g}) <= 0")
                    if math.isfinite(entry.sup_h):
                        constraints.append(f"gamma({entry.t_a:g}) > {-entry.sup_h:g}")
                else:
                    constraints.append(f"gamma({entry.t_a:g}) <= 0")
                constraints.extend(p.describe(self.specs) for p in entry.pairs)
                row["constraints"] = constraints
            rows.append(row)
        return rows


def _deletion_rule(node: Eventually | Always, category: PredicateCategory, grouped: bool) -> DeletionRule:
    if category is PredicateCategory.I:
        return DeletionRule.NEVER
    if isinstance(node, Always):
        return DeletionRule.AT_TIME
    return DeletionRule.ON_ALL_TRUE if grouped else DeletionRule.ON_PREDICATE_TRUE


def _pair_offset(target: Circle, partner: Circle) -> float:
    distance = target.distance_between_centers(partner)
    return partner.sign * target.sign * distance - partner.sign * partner.radius - target.sign * target.radius


def build_ledger(
    formula: Formula,
    categories: Sequence[PredicateCategory],
    dynamics: Dynamics,
    synthesis: SynthesisConfig | None = None,
    x0: Sequence[float] | np.ndarray | None = None,
) -> tuple[OmegaLedger, list[HocbfSpec]]:
    """
    Build the HOCBF specs and the γ ledger of ``formula``.

    When ``x0`` is given the ledger is probed once with zero raw outputs so
    that an empty interval is reported at construction time.
    """
    synthesis = synthesis or SynthesisConfig()
    occurrences = list(predicate_terms(formula))
    if len(occurrences) != len(categories):
        raise ValueError(f"{len(categories)} categories for {len(occurrences)} predicate occurrences")

    specs = []
    for index, ((node, term, position), category) in enumerate(zip(occurrences, categories, strict=True)):
        grouped = isinstance(node, Eventually) and sum(1 for t in node.terms() if isinstance(t, Pred | NegPred)) > 1
        shape = _effective_shape(term)
        degree = dynamics.relative_degree(shape)
        if degree not in (1, 2):
            raise UnsupportedRelativeDegreeError(f"relative degree {degree} of {term.name!r} is not supported")
        if category is not PredicateCategory.I and not isinstance(shape, Circle):
            raise UnsupportedShapeError(
                f"predicate {term.name!r} is Category {category.value} but not a circle",
                predicate=term.name,
            )
        specs.append(
            HocbfSpec(
                index=index,
                term=term,
                category=category,
                relative_degree=degree,
                t_a=node.t_a,
                t_b=node.t_b,
                deletion=_deletion_rule(node, category, grouped),
                operator=position,
                operator_kind="F" if isinstance(node, Eventually) else "G",
                group=position if grouped else None,
            )
        )

    fixed = [s for s in specs if not s.is_free]
    free = sorted((s for s in specs if s.is_free), key=lambda s: s.t_b)
    entries = []
    for rank, spec in enumerate(free):
        pairs = []
        partners = [(p, min(p.t_b, spec.t_b)) for p in fixed] + [(p, p.t_b) for p in free[:rank]]
        for partner, t_star in partners:
            if not isinstance(partner.shape, Circle):
                logger.warning("Skipping pair %s / %s: partner is not a circle", spec.label, partner.label)
                continue
            avoid_avoid = spec.sign < 0 and partner.sign < 0
            mixed = spec.sign != partner.sign
            released = avoid_avoid or (mixed and synthesis.release_mixed_pairs)
            offset = _pair_offset(spec.shape, partner.shape)
            pairs.append(PairConstraint(spec.index, partner.index, t_star, offset, released))
        entries.append(
            LedgerEntry(
                spec=spec.index,
                kind=spec.gamma_kind,
                t_a=spec.t_a,
                t_b=spec.t_b,
                sup_h=sup_h(spec.shape) if spec.gamma_kind is GammaKind.LINEAR else math.inf,
                pairs=tuple(pairs),
            )
        )

    ledger = OmegaLedger(specs, entries, synthesis)
    for row in ledger.describe():
        logger.debug("Ledger %s [%s, %s]: %s", row["spec"], row["category"], row["gamma"], row["constraints"])
    if x0 is not None:
        ledger.squash([0.0] * ledger.raw_size, x0, dynamics.position_indices)
    return ledger, specs


# ============================================================================
# Deletion
# ============================================================================


def group_status(specs: Sequence[HocbfSpec], position: tuple[float, float]) -> dict[int, bool]:
    """For every Eventually-over-conjunction group: whether all members have h > 0."""
    status: dict[int, bool] = {}
    for spec in specs:
        if spec.group is None:
            continue
        positive = spec.shape.h_value(*position) > 0.0
        status[spec.group] = status.get(spec.group, True) and positive
    return status


def should_delete(
    spec: HocbfSpec,
    position: tuple[float, float],
    t: float,
    groups: Mapping[int, bool],
) -> bool:
    """Whether ``spec`` is deleted at time ``t`` with the system at ``position``."""
    if spec.deletion is DeletionRule.NEVER:
        return False
    if spec.deletion is DeletionRule.AT_TIME:
        return t > spec.t_b + _TIME_TOL
    if t < spec.t_a - _TIME_TOL:
        return False
    if spec.deletion is DeletionRule.ON_ALL_TRUE:
        return bool(groups.get(spec.group, False))
    return spec.shape.h_value(*position) > 0.0


class DeletionTracker:
    """Per-episode deletion flags; once deleted a spec stays deleted."""

    def __init__(self, specs: Sequence[HocbfSpec]) -> None:
        self.specs = tuple(specs)
        self.deleted: set[int] = set()

    def update(self, position: tuple[float, float], t: float) -> set[int]:
        """Apply the deletion rules at a new sample; return the specs deleted by this call."""
        groups = group_status(self.specs, position)
        newly = {
            s.index for s in self.specs if s.index not in self.deleted and should_delete(s, position, t, groups)
        }
        if newly:
            logger.debug("t=%.3f deleted %s", t, sorted(self.specs[i].label for i in newly))
        self.deleted |= newly
        return newly

    def is_deleted(self, index: int) -> bool:
        return index in self.deleted

    def active(self) -> list[HocbfSpec]:
        return [s for s in self.specs if s.index not in self.deleted]
