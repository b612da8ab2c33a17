"""
Barrier templates produced by HOCBF synthesis.

Every predicate occurrence of a formula becomes one ``HocbfSpec`` with
barrier b(x, t) = h(x) + γ(t). The γ template depends on the category:

- Category I (satisfied at x₀ under an operator starting at 0): γ ≡ 0.
- Category II (under *eventually*): γ(t) = ω₁ + ω₂·t with ω₁ > 0 > ω₂.
- Category III (under *always*): γ(t) = ω₁·e^{−ω₂·t} − c with ω₁, ω₂ > 0.
"""

from dataclasses import dataclass
from enum import Enum

from barrierstl.core.autodiff import Operand, TapeScalar, as_scalar, constant, exp
from barrierstl.models.formula import NegPred, Pred
from barrierstl.models.shapes import Shape


class PredicateCategory(str, Enum):
    I = "I"
    II = "II"
    III = "III"


class GammaKind(str, Enum):
    ZERO = "zero"
    LINEAR = "linear"
    EXPONENTIAL = "exponential"


class DeletionRule(str, Enum):
    """When a barrier stops being enforced within an episode."""

    AT_TIME = "at_time"
    ON_PREDICATE_TRUE = "on_predicate_true"
    ON_ALL_TRUE = "on_all_true"
    NEVER = "never"


@dataclass(frozen=True)
class HocbfSpec:
    """One barrier template for a predicate occurrence."""

    index: int
    term: Pred | NegPred
    category: PredicateCategory
    relative_degree: int
    t_a: float
    t_b: float
    deletion: DeletionRule
    operator: int
    operator_kind: str
    group: int | None = None

    @property
    def shape(self) -> Shape:
        """Shape whose h is the barrier's predicate function (negated for ¬μ)."""
        return self.term.effective_shape if isinstance(self.term, NegPred) else self.term.shape

    @property
    def sign(self) -> int:
        return self.shape.sign

    @property
    def gamma_kind(self) -> GammaKind:
        if self.category is PredicateCategory.I:
            return GammaKind.ZERO
        return GammaKind.LINEAR if self.category is PredicateCategory.II else GammaKind.EXPONENTIAL

    @property
    def is_free(self) -> bool:
        """Whether γ has trainable parameters."""
        return self.category is not PredicateCategory.I

    @property
    def label(self) -> str:
        neg = "!" if isinstance(self.term, NegPred) else ""
        return f"{self.operator_kind}{self.operator}:{neg}{self.term.name}"


@dataclass(frozen=True)
class GammaParams:
    """A concrete γ: (ω₁, ω₂) on the tape plus the fixed offset c of the exponential template."""

    kind: GammaKind
    w1: TapeScalar
    w2: TapeScalar
    c: float = 0.0

    @classmethod
    def zero(cls) -> "GammaParams":
        return cls(GammaKind.ZERO, constant(0.0), constant(0.0))

    @classmethod
    def linear_from_anchors(cls, g0: Operand, gb: Operand, t_b: float) -> "GammaParams":
        """Linear γ through (0, g0) and (t_b, gb)."""
        g0 = as_scalar(g0)
        return cls(GammaKind.LINEAR, g0, (as_scalar(gb) - g0) / t_b)

    @classmethod
    def exponential(cls, w1: Operand, w2: Operand, c: float) -> "GammaParams":
        return cls(GammaKind.EXPONENTIAL, as_scalar(w1), as_scalar(w2), c)

    def value(self, t: float) -> TapeScalar:
        if self.kind is GammaKind.LINEAR:
            return self.w1 + self.w2 * t
        if self.kind is GammaKind.EXPONENTIAL:
            return self.w1 * exp(-self.w2 * t) - self.c
        return constant(0.0)

    def rate(self, t: float) -> TapeScalar:
        """dγ/dt."""
        if self.kind is GammaKind.LINEAR:
            return self.w2
        if self.kind is GammaKind.EXPONENTIAL:
            return -self.w2 * self.w1 * exp(-self.w2 * t)
        return constant(0.0)

    def curvature(self, t: float) -> TapeScalar:
        """d²γ/dt²."""
        if self.kind is GammaKind.EXPONENTIAL:
            return self.w2 * self.w2 * self.w1 * exp(-self.w2 * t)
        return constant(0.0)

    def value_at(self, t: float) -> float:
        return self.value(t).value

    def parameters(self) -> tuple[float, float]:
        return self.w1.value, self.w2.value
