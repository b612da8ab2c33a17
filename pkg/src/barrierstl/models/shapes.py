"""
Predicate shapes.

A shape defines the predicate function h over the 2-D position l(x) of the
state. Shapes evaluate h, its gradient and its Hessian quadratic form on the
tape, which is what the Lie-derivative algebra of the controller needs.

- ``Circle``: h(p) = s·(R − ‖p − o‖₂); s = +1 reaches the disk, s = −1 avoids it.
- ``Superellipse``: h(p) = s·(1 − ⁴√(((px−ox)/a)⁴ + ((py−oy)/b)⁴)).
"""

import math
from dataclasses import dataclass, replace
from typing import Protocol

from barrierstl.core.autodiff import Operand, TapeScalar, as_scalar, pow4, sqrt

Pair = tuple[TapeScalar, TapeScalar]


class Shape(Protocol):
    """Anything that can serve as a predicate function of the position."""

    sign: int

    def negated(self) -> "Shape": ...

    def h(self, p: tuple[Operand, Operand]) -> TapeScalar: ...

    def h_value(self, px: float, py: float) -> float: ...

    def gradient(self, p: tuple[Operand, Operand]) -> Pair: ...

    def hessian_form(self, p: tuple[Operand, Operand], v: tuple[Operand, Operand]) -> TapeScalar: ...


def _check_sign(sign: int) -> None:
    if sign not in (1, -1):
        raise ValueError(f"shape sign must be +1 or -1, got {sign}")


@dataclass(frozen=True)
class Circle:
    """Disk of radius ``radius`` around ``center``."""

    center: tuple[float, float]
    radius: float
    sign: int = 1

    def __post_init__(self) -> None:
        _check_sign(self.sign)
        if not self.radius > 0.0:
            raise ValueError(f"circle radius must be positive, got {self.radius}")

    def negated(self) -> "Circle":
        return replace(self, sign=-self.sign)

    def _offset(self, p: tuple[Operand, Operand]) -> tuple[TapeScalar, TapeScalar, TapeScalar]:
        dx = as_scalar(p[0]) - self.center[0]
        dy = as_scalar(p[1]) - self.center[1]
        return dx, dy, sqrt(dx * dx + dy * dy)

    def h(self, p: tuple[Operand, Operand]) -> TapeScalar:
        _, _, d = self._offset(p)
        return self.sign * (self.radius - d)

    def h_value(self, px: float, py: float) -> float:
        return self.sign * (self.radius - math.hypot(px - self.center[0], py - self.center[1]))

    def gradient(self, p: tuple[Operand, Operand]) -> Pair:
        dx, dy, d = self._offset(p)
        return -self.sign * dx / d, -self.sign * dy / d

    def hessian_form(self, p: tuple[Operand, Operand], v: tuple[Operand, Operand]) -> TapeScalar:
        dx, dy, d = self._offset(p)
        vx, vy = as_scalar(v[0]), as_scalar(v[1])
        radial = dx * vx + dy * vy
        return -self.sign * ((vx * vx + vy * vy) / d - radial * radial / (d * d * d))

    def distance_between_centers(self, other: "Circle") -> float:
        return math.dist(self.center, other.center)


@dataclass(frozen=True)
class Superellipse:
    """Rounded box |X|⁴ + |Y|⁴ ≤ 1 with X, Y the scaled offsets from ``center``."""

    center: tuple[float, float]
    a: float
    b: float
    sign: int = 1

    def __post_init__(self) -> None:
        _check_sign(self.sign)
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValueError(f"superellipse semi-axes must be positive, got a={self.a}, b={self.b}")

    def negated(self) -> "Superellipse":
        return replace(self, sign=-self.sign)

    def _scaled(self, p: tuple[Operand, Operand]) -> tuple[TapeScalar, TapeScalar, TapeScalar]:
        sx = (as_scalar(p[0]) - self.center[0]) / self.a
        sy = (as_scalar(p[1]) - self.center[1]) / self.b
        return sx, sy, sqrt(sqrt(pow4(sx) + pow4(sy)))

    def h(self, p: tuple[Operand, Operand]) -> TapeScalar:
        _, _, n = self._scaled(p)
        return self.sign * (1.0 - n)

    def h_value(self, px: float, py: float) -> float:
        sx = (px - self.center[0]) / self.a
        sy = (py - self.center[1]) / self.b
        return self.sign * (1.0 - (sx**4 + sy**4) ** 0.25)

    def gradient(self, p: tuple[Operand, Operand]) -> Pair:
        sx, sy, n = self._scaled(p)
        n3 = n * n * n
        return (
            -self.sign * sx * sx * sx / (self.a * n3),
            -self.sign * sy * sy * sy / (self.b * n3),
        )

    def hessian_form(self, p: tuple[Operand, Operand], v: tuple[Operand, Operand]) -> TapeScalar:
        sx, sy, n = self._scaled(p)
        vx = as_scalar(v[0]) / self.a
        vy = as_scalar(v[1]) / self.b
        n3 = n * n * n
        n7 = n3 * n3 * n
        sx2, sy2 = sx * sx, sy * sy
        sx3, sy3 = sx2 * sx, sy2 * sy
        hxx = 3.0 * sx2 / n3 - 3.0 * sx3 * sx3 / n7
        hyy = 3.0 * sy2 / n3 - 3.0 * sy3 * sy3 / n7
        hxy = -3.0 * sx3 * sy3 / n7
        return -self.sign * (hxx * vx * vx + 2.0 * hxy * vx * vy + hyy * vy * vy)


def is_circle(shape: object) -> bool:
    return isinstance(shape, Circle)
