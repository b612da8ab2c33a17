"""
STL fragment: parsing, printing and evaluation.

Concrete syntax::

    top   := unit ("&" unit)*
    unit  := ("F" | "G") "[" num "," num "]" inner
    inner := term | "(" term ("&" term)* ")"
    term  := ["!"] ident | "true"

Evaluation happens at the discrete sample times of a ``Trajectory``.
``robustness`` uses the exponential conjunction aggregator; *always* is a
conjunction over time and *eventually* is the De Morgan dual
F φ = ¬G¬φ, so only the conjunction rule is needed.
"""

import logging
import math
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from barrierstl.core.autodiff import Operand, TapeScalar, as_scalar, constant, exp, minimum, total
from barrierstl.core.exceptions import FormulaSyntaxError, FragmentViolationError, UnknownIdentifierError
from barrierstl.models.formula import (
    Always,
    Eventually,
    Formula,
    Inner,
    InnerAnd,
    NegPred,
    Pred,
    Temporal,
    Term,
    TopAnd,
    TrueNode,
    temporal_nodes,
)
from barrierstl.models.shapes import Shape
from barrierstl.models.trajectory import Trajectory

logger = logging.getLogger(__name__)

DEFAULT_BETA = 0.5
TRUE_KEYWORD = "true"

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[\[\],()&!|~]))"
)


# ============================================================================
# Parsing
# ============================================================================


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        match = _TOKEN.match(text, pos)
        if match is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise FormulaSyntaxError(f"unexpected character {text[bad]!r}", text, bad)
        kind = match.lastgroup or "punct"
        tokens.append(_Token(kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, shapes: Mapping[str, Shape]) -> None:
        self.text = text
        self.shapes = shapes
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _peek(self, offset: int = 1) -> _Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def _fail(self, message: str, token: _Token | None = None) -> FormulaSyntaxError:
        token = token or self.tok
        return FormulaSyntaxError(message, self.text, token.pos)

    def _expect(self, text: str) -> _Token:
        token = self.tok
        if token.text != text:
            found = "end of input" if token.kind == "end" else repr(token.text)
            raise self._fail(f"expected {text!r}, found {found}")
        self.i += 1
        return token

    def _is_operator(self) -> bool:
        return self.tok.kind == "ident" and self.tok.text in ("F", "G") and self._peek().text == "["

    def _check_connective(self) -> None:
        if self.tok.text in ("|", "~"):
            raise FragmentViolationError(
                f"disjunction is not part of the supported fragment (position {self.tok.pos})",
                position=self.tok.pos,
            )

    def parse(self) -> Formula:
        units = [self._unit()]
        self._check_connective()
        while self.tok.text == "&":
            self.i += 1
            units.append(self._unit())
            self._check_connective()
        if self.tok.kind != "end":
            raise self._fail(f"unexpected {self.tok.text!r}")
        return units[0] if len(units) == 1 else TopAnd(tuple(units))

    def _unit(self) -> Temporal:
        if not self._is_operator():
            if self.tok.kind == "ident" or self.tok.text in ("!", "("):
                raise FragmentViolationError(
                    f"top-level conjuncts must be wrapped by F[..] or G[..] (position {self.tok.pos})",
                    position=self.tok.pos,
                )
            raise self._fail("expected a temporal operator F[ta,tb] or G[ta,tb]")
        op = self.tok.text
        self.i += 1
        self._expect("[")
        t_a = self._number()
        self._expect(",")
        t_b = self._number()
        self._expect("]")
        child = self._inner()
        node = Eventually if op == "F" else Always
        return node(t_a, t_b, child)

    def _number(self) -> float:
        token = self.tok
        if token.kind != "num":
            raise self._fail("expected a non-negative number")
        self.i += 1
        return float(token.text)

    def _inner(self) -> Inner:
        if self.tok.text != "(":
            return self._term()
        self.i += 1
        terms = [self._term()]
        while self.tok.text == "&":
            self.i += 1
            terms.append(self._term())
        self._check_connective()
        self._expect(")")
        return InnerAnd(tuple(terms))

    def _term(self) -> Term:
        if self._is_operator():
            raise FragmentViolationError(
                f"temporal operators may not be nested (position {self.tok.pos})", position=self.tok.pos
            )
        negated = False
        if self.tok.text == "!":
            negated = True
            self.i += 1
            if self.tok.text in ("(", "!") or self._is_operator():
                raise FragmentViolationError(
                    f"negation applies only to predicates (position {self.tok.pos})", position=self.tok.pos
                )
        token = self.tok
        if token.kind != "ident":
            raise self._fail("expected a predicate name")
        self.i += 1
        if token.text == TRUE_KEYWORD:
            if negated:
                raise FragmentViolationError("negated 'true' is not part of the fragment", position=token.pos)
            return TrueNode()
        if token.text not in self.shapes:
            raise UnknownIdentifierError(
                f"unknown predicate {token.text!r} at position {token.pos}", name=token.text, position=token.pos
            )
        shape = self.shapes[token.text]
        return NegPred(token.text, shape) if negated else Pred(token.text, shape)


def parse(text: str, shape_table: Mapping[str, Shape]) -> Formula:
    """Parse ``text`` into a fragment formula whose predicates resolve in ``shape_table``."""
    formula = _Parser(text, shape_table).parse()
    logger.debug("Parsed formula %s", format_formula(formula))
    return formula


# ============================================================================
# Printing
# ============================================================================


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _format_term(term: Term) -> str:
    if isinstance(term, TrueNode):
        return TRUE_KEYWORD
    return f"!{term.name}" if isinstance(term, NegPred) else term.name


def _format_inner(inner: Inner) -> str:
    if isinstance(inner, InnerAnd):
        return "(" + " & ".join(_format_term(t) for t in inner.children) + ")"
    return _format_term(inner)


def format_formula(formula: Formula) -> str:
    """Render ``formula`` in the concrete syntax accepted by ``parse``."""
    parts = []
    for node in temporal_nodes(formula):
        op = "F" if isinstance(node, Eventually) else "G"
        parts.append(f"{op}[{_num(node.t_a)},{_num(node.t_b)}] {_format_inner(node.child)}")
    return " & ".join(parts)


# ============================================================================
# Qualitative semantics
# ============================================================================


def horizon(formula: Formula) -> float:
    """Largest end time over the temporal operators."""
    return max(node.t_b for node in temporal_nodes(formula))


def _term_holds(term: Term, traj: Trajectory, k: int) -> bool:
    if isinstance(term, TrueNode):
        return True
    h = term.shape.h_value(*traj.position_value(k))
    return h >= 0.0 if isinstance(term, Pred) else h < 0.0


def _temporal_holds(node: Temporal, traj: Trajectory, t: float) -> bool:
    terms = node.terms()
    hits = (all(_term_holds(term, traj, k) for term in terms) for k in traj.window(t, node.t_a, node.t_b))
    return any(hits) if isinstance(node, Eventually) else all(hits)


def satisfies(formula: Formula, traj: Trajectory, t: float = 0.0) -> bool:
    """Boolean semantics at the sample times of ``traj``."""
    nodes = temporal_nodes(formula)
    for node in nodes:
        traj.window(t, node.t_a, node.t_b)
    return all(_temporal_holds(node, traj, t) for node in nodes)


# ============================================================================
# Exponential robustness
# ============================================================================


def exp_and(rhos: Sequence[Operand], beta: float = DEFAULT_BETA) -> TapeScalar:
    """
    Exponential conjunction of child robustness values.

    With ρ_min the (exact) minimum, each child gets an effective value

        ρ_min·exp((ρ_i − ρ_min)/ρ_min)        if ρ_min < 0
        ρ_min·(2 − exp((ρ_min − ρ_i)/ρ_min))  if ρ_min > 0
        0                                      if ρ_min = 0

    and the result is β·ρ_min + (1 − β)·mean(effective values).
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    values = [as_scalar(r) for r in rhos]
    if not values:
        raise ValueError("conjunction of zero robustness values")
    if len(values) == 1:
        return values[0]
    rmin = minimum(*values)
    if rmin.value < 0.0:
        effective = [rmin * exp((r - rmin) / rmin) for r in values]
    elif rmin.value > 0.0:
        effective = [rmin * (2.0 - exp((rmin - r) / rmin)) for r in values]
    else:
        effective = [constant(0.0)] * len(values)
    return beta * rmin + (1.0 - beta) * total(effective) / len(values)


def _term_robustness(term: Pred | NegPred, traj: Trajectory, k: int) -> TapeScalar:
    h = term.shape.h(traj.position(k))
    return h if isinstance(term, Pred) else -h


def _conjunction(values: list[TapeScalar], beta: float) -> TapeScalar:
    finite = [v for v in values if not math.isinf(v.value)]
    return exp_and(finite, beta) if finite else constant(math.inf)


def _temporal_robustness(node: Temporal, traj: Trajectory, t: float, beta: float) -> TapeScalar:
    terms = [term for term in node.terms() if not isinstance(term, TrueNode)]
    samples = []
    for k in traj.window(t, node.t_a, node.t_b):
        if not terms:
            return constant(math.inf)
        samples.append(_conjunction([_term_robustness(term, traj, k) for term in terms], beta))
    if isinstance(node, Always):
        return exp_and(samples, beta)
    return -exp_and([-s for s in samples], beta)


def robustness(formula: Formula, traj: Trajectory, t: float = 0.0, beta: float = DEFAULT_BETA) -> TapeScalar:
    """Exponential robustness ρ(formula, traj, t); positive only if ``formula`` holds."""
    nodes = temporal_nodes(formula)
    for node in nodes:
        traj.window(t, node.t_a, node.t_b)
    return _conjunction([_temporal_robustness(node, traj, t, beta) for node in nodes], beta)
