"""
Reverse-mode automatic differentiation over scalars.

A ``Tape`` is an append-only list of nodes. Each node stores the kind of the
primitive that produced it, the indices of its parent nodes and the local
partial derivatives with respect to those parents. ``TapeScalar`` wraps a
float value together with its node index; scalars without a node are
constants and never receive gradients.

Network layers use the fused ``affine`` primitive: one node per output
whose parents are the layer inputs, the weight row and the bias, with the
partials held in numpy arrays. Everything else is recorded one scalar
primitive at a time.

Tie rules: ``min``/``max`` send the gradient to the first argmin/argmax;
``relu`` and ``abs`` have derivative 0 at 0.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from barrierstl.core.exceptions import AutodiffDomainError, TapeMismatchError

Number = float | int


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _softplus(x: float) -> float:
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def _first_index(values: Sequence[float], pick: Callable[[Iterable[float]], float]) -> int:
    target = pick(values)
    return next(i for i, v in enumerate(values) if v == target)


def _min_rule(vals: Sequence[float]) -> tuple[float, tuple[float, ...]]:
    k = _first_index(vals, min)
    return vals[k], tuple(1.0 if i == k else 0.0 for i in range(len(vals)))


def _max_rule(vals: Sequence[float]) -> tuple[float, tuple[float, ...]]:
    k = _first_index(vals, max)
    return vals[k], tuple(1.0 if i == k else 0.0 for i in range(len(vals)))


def _div_rule(vals: Sequence[float]) -> tuple[float, tuple[float, ...]]:
    a, b = vals
    if b == 0.0:
        raise ZeroDivisionError
    return a / b, (1.0 / b, -a / (b * b))


def _ln_rule(vals: Sequence[float]) -> tuple[float, tuple[float, ...]]:
    (a,) = vals
    if a <= 0.0:
        raise ValueError
    return math.log(a), (1.0 / a,)


def _sqrt_rule(vals: Sequence[float]) -> tuple[float, tuple[float, ...]]:
    (a,) = vals
    if a <= 0.0:
        raise ValueError
    r = math.sqrt(a)
    return r, (0.5 / r,)


def _exp_rule(vals: Sequence[float]) -> tuple[float, tuple[float, ...]]:
    e = math.exp(vals[0])
    return e, (e,)


def _sigmoid_rule(vals: Sequence[float]) -> tuple[float, tuple[float, ...]]:
    s = _sigmoid(vals[0])
    return s, (s * (1.0 - s),)


def _tanh_rule(vals: Sequence[float]) -> tuple[float, tuple[float, ...]]:
    t = math.tanh(vals[0])
    return t, (1.0 - t * t,)


def _abs_rule(vals: Sequence[float]) -> tuple[float, tuple[float, ...]]:
    a = vals[0]
    return abs(a), (1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0),)


_RULES: dict[str, Callable[[Sequence[float]], tuple[float, tuple[float, ...]]]] = {
    "add": lambda v: (v[0] + v[1], (1.0, 1.0)),
    "sub": lambda v: (v[0] - v[1], (1.0, -1.0)),
    "mul": lambda v: (v[0] * v[1], (v[1], v[0])),
    "div": _div_rule,
    "neg": lambda v: (-v[0], (-1.0,)),
    "exp": _exp_rule,
    "ln": _ln_rule,
    "sqrt": _sqrt_rule,
    "pow4": lambda v: (v[0] ** 4, (4.0 * v[0] ** 3,)),
    "sigmoid": _sigmoid_rule,
    "softplus": lambda v: (_softplus(v[0]), (_sigmoid(v[0]),)),
    "tanh": _tanh_rule,
    "relu": lambda v: (max(v[0], 0.0), (1.0 if v[0] > 0.0 else 0.0,)),
    "min": _min_rule,
    "max": _max_rule,
    "abs": _abs_rule,
}

PRIMITIVES = frozenset(_RULES)


@dataclass(frozen=True, slots=True)
class LeafBlock:
    """Contiguous run of leaf nodes holding one parameter array."""

    tape: Tape
    start: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=int))

    def scalars(self) -> list[TapeScalar]:
        values = self.tape._values
        return [TapeScalar(values[self.start + i], self.start + i, self.tape) for i in range(self.size)]


class TapeScalar:
    """A float participating in a tape (or a constant when ``node`` is None)."""

    __slots__ = ("node", "tape", "value")

    def __init__(self, value: float, node: int | None = None, tape: Tape | None = None) -> None:
        self.value = float(value)
        self.node = node
        self.tape = tape

    @property
    def is_constant(self) -> bool:
        return self.node is None

    def __repr__(self) -> str:
        where = "const" if self.node is None else f"node={self.node}"
        return f"TapeScalar({self.value!r}, {where})"

    def __float__(self) -> float:
        return self.value

    def __add__(self, other: Operand) -> TapeScalar:
        return record("add", self, other)

    def __radd__(self, other: Operand) -> TapeScalar:
        return record("add", other, self)

    def __sub__(self, other: Operand) -> TapeScalar:
        return record("sub", self, other)

    def __rsub__(self, other: Operand) -> TapeScalar:
        return record("sub", other, self)

    def __mul__(self, other: Operand) -> TapeScalar:
        return record("mul", self, other)

    def __rmul__(self, other: Operand) -> TapeScalar:
        return record("mul", other, self)

    def __truediv__(self, other: Operand) -> TapeScalar:
        return record("div", self, other)

    def __rtruediv__(self, other: Operand) -> TapeScalar:
        return record("div", other, self)

    def __neg__(self) -> TapeScalar:
        return record("neg", self)

    def exp(self) -> TapeScalar:
        return record("exp", self)

    def ln(self) -> TapeScalar:
        return record("ln", self)

    def sqrt(self) -> TapeScalar:
        return record("sqrt", self)


Operand = TapeScalar | Number


def constant(value: Number) -> TapeScalar:
    """Wrap a plain number as a constant scalar."""
    return TapeScalar(float(value))


def as_scalar(value: Operand) -> TapeScalar:
    return value if isinstance(value, TapeScalar) else TapeScalar(float(value))


def _tape_of(args: Sequence[TapeScalar]) -> Tape | None:
    tape: Tape | None = None
    for arg in args:
        if arg.tape is None:
            continue
        if tape is None:
            tape = arg.tape
        elif arg.tape is not tape:
            raise TapeMismatchError("operands live on different tapes")
    return tape


class Tape:
    """Append-only record of primitive evaluations."""

    __slots__ = ("_kinds", "_parents", "_partials", "_values")

    def __init__(self) -> None:
        self._values: list[float] = []
        self._kinds: list[str] = []
        self._parents: list[tuple[int, ...] | np.ndarray | None] = []
        self._partials: list[tuple[float, ...] | np.ndarray | None] = []

    def __len__(self) -> int:
        return len(self._values)

    def kind(self, node: int) -> str:
        return self._kinds[node]

    def _append(
        self,
        kind: str,
        value: float,
        parents: tuple[int, ...] | np.ndarray | None,
        partials: tuple[float, ...] | np.ndarray | None,
    ) -> TapeScalar:
        self._values.append(value)
        self._kinds.append(kind)
        self._parents.append(parents)
        self._partials.append(partials)
        return TapeScalar(value, len(self._values) - 1, self)

    def leaf(self, value: Number) -> TapeScalar:
        """Create an independent variable."""
        return self._append("leaf", float(value), None, None)

    def leaves(self, values: np.ndarray) -> LeafBlock:
        """Create one leaf per entry of ``values`` (row-major)."""
        array = np.asarray(values, dtype=float)
        start = len(self._values)
        for v in array.ravel():
            self._append("leaf", float(v), None, None)
        return LeafBlock(self, start, array.shape)

    def primitive(self, op: str, args: Sequence[TapeScalar]) -> TapeScalar:
        rule = _RULES[op]
        values = [a.value for a in args]
        try:
            value, local = rule(values)
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise AutodiffDomainError(
                f"{op}{tuple(values)} is outside the domain of the primitive",
                op=op,
                node=len(self._values),
            ) from exc
        keep = [(a.node, d) for a, d in zip(args, local, strict=True) if a.node is not None]
        parents = tuple(n for n, _ in keep)
        partials = tuple(d for _, d in keep)
        return self._append(op, value, parents, partials)

    def custom(self, kind: str, value: float, parents: Sequence[TapeScalar], partials: Sequence[float]) -> TapeScalar:
        """Record a node whose local partials were computed outside the tape."""
        _tape_of([*parents, TapeScalar(0.0, 0, self)])
        keep = [(p.node, float(d)) for p, d in zip(parents, partials, strict=True) if p.node is not None]
        if keep:
            nodes = np.fromiter((n for n, _ in keep), dtype=np.intp, count=len(keep))
            local = np.fromiter((d for _, d in keep), dtype=float, count=len(keep))
        else:
            nodes, local = np.empty(0, dtype=np.intp), np.empty(0)
        return self._append(kind, float(value), nodes, local)

    def affine(
        self,
        inputs: Sequence[TapeScalar],
        weight: np.ndarray,
        bias: np.ndarray,
        weight_block: LeafBlock | None = None,
        bias_block: LeafBlock | None = None,
    ) -> list[TapeScalar]:
        """Record ``weight @ inputs + bias`` as one node per output."""
        _tape_of([*inputs, TapeScalar(0.0, 0, self)])
        n_out, n_in = weight.shape
        x = np.fromiter((s.value for s in inputs), dtype=float, count=n_in)
        on = [i for i, s in enumerate(inputs) if s.node is not None]
        x_nodes = np.array([inputs[i].node for i in on], dtype=np.intp)
        columns = np.arange(n_in, dtype=np.intp)
        out = weight @ x + bias
        result = []
        for j in range(n_out):
            parents = [x_nodes]
            partials = [weight[j, on]]
            if weight_block is not None:
                parents.append(weight_block.start + j * n_in + columns)
                partials.append(x)
            if bias_block is not None:
                parents.append(np.array([bias_block.start + j], dtype=np.intp))
                partials.append(np.ones(1))
            result.append(self._append("affine", float(out[j]), np.concatenate(parents), np.concatenate(partials)))
        return result

    def backward(self, root: TapeScalar) -> Gradient:
        """Accumulate ∂root/∂node for every node preceding ``root``."""
        if root.tape is not self or root.node is None:
            raise TapeMismatchError("backward root is not a node of this tape")
        adjoint = np.zeros(len(self._values))
        adjoint[root.node] = 1.0
        parents_of = self._parents
        partials_of = self._partials
        for i in range(root.node, -1, -1):
            g = adjoint[i]
            if g == 0.0:
                continue
            parents = parents_of[i]
            if parents is None:
                continue
            partials = partials_of[i]
            if isinstance(parents, tuple):
                for k in range(len(parents)):
                    adjoint[parents[k]] += g * partials[k]
            else:
                np.add.at(adjoint, parents, g * partials)
        return Gradient(self, adjoint)


class Gradient:
    """Gradient map from nodes of one tape to ∂root/∂node."""

    __slots__ = ("_adjoint", "tape")

    def __init__(self, tape: Tape, adjoint: np.ndarray) -> None:
        self.tape = tape
        self._adjoint = adjoint

    def __getitem__(self, x: TapeScalar) -> float:
        if x.node is None:
            return 0.0
        if x.tape is not self.tape:
            raise TapeMismatchError("scalar is not a node of this gradient's tape")
        return float(self._adjoint[x.node])

    def block(self, block: LeafBlock) -> np.ndarray:
        if block.tape is not self.tape:
            raise TapeMismatchError("leaf block is not on this gradient's tape")
        return self._adjoint[block.start : block.start + block.size].reshape(block.shape).copy()

    def wrt(self, xs: Iterable[TapeScalar]) -> np.ndarray:
        return np.array([self[x] for x in xs])


def record(op: str, *args: Operand) -> TapeScalar:
    """Evaluate primitive ``op``, recording it when any argument is on a tape."""
    if op not in _RULES:
        raise AutodiffDomainError(f"unknown primitive {op!r}", op=op)
    scalars = [as_scalar(a) for a in args]
    tape = _tape_of(scalars)
    if tape is None:
        try:
            value, _ = _RULES[op]([s.value for s in scalars])
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise AutodiffDomainError(f"{op} is outside the domain of the primitive", op=op, node=None) from exc
        return TapeScalar(value)
    return tape.primitive(op, scalars)


def backward(tape: Tape, root: TapeScalar) -> Gradient:
    """Reverse pass over ``tape`` from ``root``."""
    return tape.backward(root)


# ============================================================================
# Convenience wrappers
# ============================================================================


def exp(x: Operand) -> TapeScalar:
    return record("exp", x)


def ln(x: Operand) -> TapeScalar:
    return record("ln", x)


def sqrt(x: Operand) -> TapeScalar:
    return record("sqrt", x)


def pow4(x: Operand) -> TapeScalar:
    return record("pow4", x)


def sigmoid(x: Operand) -> TapeScalar:
    return record("sigmoid", x)


def softplus(x: Operand) -> TapeScalar:
    return record("softplus", x)


def tanh(x: Operand) -> TapeScalar:
    return record("tanh", x)


def relu(x: Operand) -> TapeScalar:
    return record("relu", x)


def absolute(x: Operand) -> TapeScalar:
    return record("abs", x)


def minimum(*xs: Operand) -> TapeScalar:
    return record("min", *xs)


def maximum(*xs: Operand) -> TapeScalar:
    return record("max", *xs)


def total(xs: Iterable[Operand]) -> TapeScalar:
    """Left-to-right sum; the empty sum is the constant 0."""
    acc: TapeScalar | None = None
    for x in xs:
        acc = as_scalar(x) if acc is None else acc + x
    return acc if acc is not None else constant(0.0)


def dot(xs: Sequence[Operand], ys: Sequence[Operand]) -> TapeScalar:
    return total(as_scalar(x) * y for x, y in zip(xs, ys, strict=True))


def values_of(xs: Iterable[TapeScalar]) -> np.ndarray:
    return np.array([x.value for x in xs], dtype=float)
