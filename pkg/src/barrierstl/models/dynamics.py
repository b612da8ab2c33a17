"""
Control-affine dynamics ẋ = f(x) + g(x)·u.

Each system also knows the Lie derivatives of a position-based predicate
function h(l(x)) along its vector fields, in closed form. The relative degree
of such an h is a property of the system: 2 for the double integrator, 1 for
the single integrator.
"""

from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from barrierstl.core.autodiff import Operand, TapeScalar, as_scalar
from barrierstl.models.shapes import Shape


@dataclass(frozen=True)
class LieTerms:
    """Drift chain [h, L_f h, …, L_f^m h] and the control gain L_g L_f^{m−1} h."""

    drift: tuple[TapeScalar, ...]
    gain: tuple[TapeScalar, ...]

    @property
    def relative_degree(self) -> int:
        return len(self.drift) - 1


class Dynamics(ABC):
    """A control-affine system with a 2-D position output."""

    name: str
    state_names: tuple[str, ...]
    control_names: tuple[str, ...]
    position_indices: tuple[int, int] = (0, 1)

    @property
    def n(self) -> int:
        return len(self.state_names)

    @property
    def q(self) -> int:
        return len(self.control_names)

    @abstractmethod
    def drift(self, x: Sequence[Operand]) -> list[TapeScalar]:
        """f(x)."""

    @abstractmethod
    def input_matrix(self, x: Sequence[Operand]) -> np.ndarray:
        """g(x) as an n×q array (state independent for the built-in systems)."""

    @abstractmethod
    def relative_degree(self, shape: Shape) -> int:
        """Relative degree of h(l(x)) for ``shape``."""

    @abstractmethod
    def lie_terms(self, shape: Shape, x: Sequence[Operand]) -> LieTerms:
        """Closed-form Lie derivatives of h(l(x))."""

    def vector_field(self, x: Sequence[Operand], u: Sequence[Operand]) -> list[TapeScalar]:
        """f(x) + g(x)·u."""
        g = self.input_matrix(x)
        rates = self.drift(x)
        for i in range(self.n):
            for j in range(self.q):
                if g[i, j] != 0.0:
                    rates[i] = rates[i] + g[i, j] * as_scalar(u[j])
        return rates

    def rest_state(self, px: float, py: float) -> np.ndarray:
        """State at position (px, py) with every other coordinate zero."""
        x = np.zeros(self.n)
        x[self.position_indices[0]] = px
        x[self.position_indices[1]] = py
        return x


class DoubleIntegrator2D(Dynamics):
    """Planar point mass driven by acceleration: x = [px, py, vx, vy], u = [ax, ay]."""

    name = "double_integrator"
    state_names = ("px", "py", "vx", "vy")
    control_names = ("ax", "ay")

    def drift(self, x: Sequence[Operand]) -> list[TapeScalar]:
        zero = as_scalar(0.0)
        return [as_scalar(x[2]), as_scalar(x[3]), zero, zero]

    def input_matrix(self, x: Sequence[Operand]) -> np.ndarray:
        return np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def relative_degree(self, shape: Shape) -> int:
        return 2

    def lie_terms(self, shape: Shape, x: Sequence[Operand]) -> LieTerms:
        p = (x[0], x[1])
        v = (x[2], x[3])
        gx, gy = shape.gradient(p)
        return LieTerms(
            drift=(shape.h(p), gx * v[0] + gy * v[1], shape.hessian_form(p, v)),
            gain=(gx, gy),
        )


class SingleIntegrator2D(Dynamics):
    """Planar kinematic point driven by velocity: x = [px, py], u = [ux, uy]."""

    name = "single_integrator"
    state_names = ("px", "py")
    control_names = ("ux", "uy")

    def drift(self, x: Sequence[Operand]) -> list[TapeScalar]:
        zero = as_scalar(0.0)
        return [zero, zero]

    def input_matrix(self, x: Sequence[Operand]) -> np.ndarray:
        return np.eye(2)

    def relative_degree(self, shape: Shape) -> int:
        return 1

    def lie_terms(self, shape: Shape, x: Sequence[Operand]) -> LieTerms:
        p = (x[0], x[1])
        gx, gy = shape.gradient(p)
        return LieTerms(drift=(shape.h(p), as_scalar(0.0)), gain=(gx, gy))


DYNAMICS: dict[str, Dynamics] = {
    DoubleIntegrator2D.name: DoubleIntegrator2D(),
    SingleIntegrator2D.name: SingleIntegrator2D(),
}


def get_dynamics(name: str) -> Dynamics:
    try:
        return DYNAMICS[name]
    except KeyError:
        raise ValueError(f"unknown dynamics {name!r}; known: {', '.join(DYNAMICS)}") from None
