"""Uniformly sampled state trajectories."""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from barrierstl.core.autodiff import Operand, TapeScalar, as_scalar, values_of
from barrierstl.core.exceptions import TrajectoryTooShortError

State = Sequence[TapeScalar]


@dataclass
class Trajectory:
    """States sampled at t = k·dt, optionally with the controls applied between samples."""

    dt: float
    states: list[State]
    controls: list[State] = field(default_factory=list)
    position_indices: tuple[int, int] = (0, 1)

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @classmethod
    def from_array(
        cls,
        dt: float,
        states: np.ndarray | Sequence[Sequence[Operand]],
        controls: np.ndarray | Sequence[Sequence[Operand]] | None = None,
        position_indices: tuple[int, int] = (0, 1),
    ) -> "Trajectory":
        """Wrap numeric (or mixed) rows as constant scalars."""
        wrap = [[as_scalar(v) for v in row] for row in states]
        ctrl = [[as_scalar(v) for v in row] for row in controls] if controls is not None else []
        return cls(dt, wrap, ctrl, position_indices)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def duration(self) -> float:
        return (len(self.states) - 1) * self.dt

    def position(self, k: int) -> tuple[TapeScalar, TapeScalar]:
        i, j = self.position_indices
        return self.states[k][i], self.states[k][j]

    def position_value(self, k: int) -> tuple[float, float]:
        i, j = self.position_indices
        return self.states[k][i].value, self.states[k][j].value

    def window(self, t: float, t_a: float, t_b: float) -> range:
        """Sample indices k with k·dt in [t + t_a, t + t_b], endpoints within half a step included."""
        lo = max(math.ceil((t + t_a) / self.dt - 0.5), 0)
        hi = math.floor((t + t_b) / self.dt + 0.5)
        if hi >= len(self.states):
            raise TrajectoryTooShortError(
                f"trajectory covers {self.duration:.6g}s but the formula needs samples up to {t + t_b:.6g}s",
                needed=t + t_b,
                available=self.duration,
            )
        return range(lo, hi + 1)

    def state_values(self) -> np.ndarray:
        return np.array([values_of(s) for s in self.states])

    def control_values(self) -> np.ndarray:
        return np.array([values_of(u) for u in self.controls]) if self.controls else np.empty((0, 0))


def sample_count(horizon: float, dt: float) -> int:
    """Number of samples covering [0, horizon]: ⌈horizon/dt⌉ + 1."""
    return math.ceil(horizon / dt - 1e-9) + 1
