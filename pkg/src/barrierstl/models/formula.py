"""
Abstract syntax of the supported STL fragment.

    φ ::= ⊤ | μ | ¬μ | φ₁ ∧ φ₂
    ϕ ::= F[ta,tb] φ | G[ta,tb] φ | ϕ₁ ∧ ϕ₂

Negation sits only on predicates, temporal operators never nest, and the top
level is a conjunction of temporal-wrapped φ formulas. All nodes are frozen
and safe to share between threads.
"""

from collections.abc import Iterator
from dataclasses import dataclass

from barrierstl.core.exceptions import FragmentViolationError
from barrierstl.models.shapes import Shape


@dataclass(frozen=True)
class TrueNode:
    """The literal ⊤."""


@dataclass(frozen=True)
class Pred:
    """Predicate h(x) ≥ 0."""

    name: str
    shape: Shape


@dataclass(frozen=True)
class NegPred:
    """Negated predicate ¬(h(x) ≥ 0)."""

    name: str
    shape: Shape

    @property
    def effective_shape(self) -> Shape:
        """Shape whose h is −h of the wrapped predicate."""
        return self.shape.negated()


Term = TrueNode | Pred | NegPred


@dataclass(frozen=True)
class InnerAnd:
    """Conjunction of predicate terms under one temporal operator."""

    children: tuple[Term, ...]

    def __post_init__(self) -> None:
        if not self.children:
            raise FragmentViolationError("empty conjunction")
        for child in self.children:
            if not isinstance(child, TrueNode | Pred | NegPred):
                raise FragmentViolationError("conjunctions under a temporal operator may only hold predicates")


Inner = Term | InnerAnd


@dataclass(frozen=True)
class _Temporal:
    t_a: float
    t_b: float
    child: Inner

    def __post_init__(self) -> None:
        if not 0.0 <= self.t_a < self.t_b:
            raise FragmentViolationError(f"time interval [{self.t_a}, {self.t_b}] must satisfy 0 <= t_a < t_b")
        if not isinstance(self.child, TrueNode | Pred | NegPred | InnerAnd):
            raise FragmentViolationError("temporal operators may not be nested")

    def terms(self) -> tuple[Term, ...]:
        return self.child.children if isinstance(self.child, InnerAnd) else (self.child,)


@dataclass(frozen=True)
class Eventually(_Temporal):
    """F[t_a, t_b] φ."""


@dataclass(frozen=True)
class Always(_Temporal):
    """G[t_a, t_b] φ."""


Temporal = Eventually | Always


@dataclass(frozen=True)
class TopAnd:
    """Conjunction of at least two temporal formulas."""

    children: tuple[Temporal, ...]

    def __post_init__(self) -> None:
        if len(self.children) < 2:
            raise FragmentViolationError("a top-level conjunction needs at least two temporal formulas")
        for child in self.children:
            if not isinstance(child, Eventually | Always):
                raise FragmentViolationError("the top level must be a conjunction of temporal formulas")


Formula = Temporal | TopAnd


def temporal_nodes(formula: Formula) -> tuple[Temporal, ...]:
    """Temporal operators of ``formula`` in textual order."""
    return formula.children if isinstance(formula, TopAnd) else (formula,)


def predicate_terms(formula: Formula) -> Iterator[tuple[Temporal, Pred | NegPred, int]]:
    """Yield (wrapping operator, predicate term, operator position) for every predicate occurrence."""
    for position, node in enumerate(temporal_nodes(formula)):
        for term in node.terms():
            if isinstance(term, Pred | NegPred):
                yield node, term, position
