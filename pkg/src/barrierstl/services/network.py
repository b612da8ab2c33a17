"""
Feedforward networks on the scalar tape.

An ``Mlp`` owns its parameters as numpy arrays keyed ``W0, b0, W1, b1, …``
(the layout the optimizer updates). ``bind`` places them on a tape as leaf
blocks; the resulting ``BoundMlp`` evaluates the network with one fused
affine node per neuron and reads parameter gradients back from a
``Gradient``.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from barrierstl.core.autodiff import Gradient, LeafBlock, Operand, Tape, TapeScalar, as_scalar, sigmoid, softplus, tanh


@dataclass(frozen=True)
class Squash:
    """Output squashing descriptor: identity, interval(lo, hi), above(lo) or below(hi)."""

    kind: str = "identity"
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "interval", "above", "below"):
            raise ValueError(f"unknown squash kind {self.kind!r}")
        if self.kind == "interval" and not self.lo < self.hi:
            raise ValueError(f"interval squash needs lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Squash":
        return cls("interval", lo, hi)

    @classmethod
    def above(cls, lo: float) -> "Squash":
        return cls("above", lo=lo)

    @classmethod
    def below(cls, hi: float) -> "Squash":
        return cls("below", hi=hi)

    def __call__(self, x: Operand) -> TapeScalar:
        if self.kind == "interval":
            return self.lo + (self.hi - self.lo) * sigmoid(x)
        if self.kind == "above":
            return self.lo + softplus(x)
        if self.kind == "below":
            return self.hi - softplus(x)
        return as_scalar(x)


IDENTITY = Squash()


def init_params(widths: Sequence[int], rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform ±sqrt(6 / (fan_in + fan_out)) weights and zero biases."""
    params: dict[str, np.ndarray] = {}
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:], strict=True)):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        params[f"W{layer}"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params[f"b{layer}"] = np.zeros(fan_out)
    return params


class Mlp:
    """tanh multilayer perceptron with per-output squashing."""

    def __init__(
        self,
        widths: Sequence[int],
        params: dict[str, np.ndarray] | None = None,
        squash: Sequence[Squash] | None = None,
        rng: np.random.Generator | None = None,
    ) -> None:
        if len(widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        self.widths = tuple(int(w) for w in widths)
        if params is None:
            params = init_params(self.widths, rng if rng is not None else np.random.default_rng(0))
        self.params = params
        self.squash = tuple(squash) if squash is not None else (IDENTITY,) * self.widths[-1]
        if len(self.squash) != self.widths[-1]:
            raise ValueError(f"{len(self.squash)} squash descriptors for {self.widths[-1]} outputs")
        self._check_shapes()

    @property
    def layers(self) -> int:
        return len(self.widths) - 1

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    def _check_shapes(self) -> None:
        for layer in range(self.layers):
            w, b = self.params[f"W{layer}"], self.params[f"b{layer}"]
            expected = (self.widths[layer + 1], self.widths[layer])
            if w.shape != expected or b.shape != (expected[0],):
                raise ValueError(f"layer {layer}: W{w.shape}/b{b.shape} do not match widths {self.widths}")

    def bind(self, tape: Tape) -> "BoundMlp":
        """Place every parameter on ``tape`` as leaves."""
        blocks = {name: tape.leaves(value) for name, value in self.params.items()}
        return BoundMlp(self, tape, blocks)

    def __call__(self, x: Sequence[Operand]) -> list[TapeScalar]:
        """Evaluate without recording parameter leaves (parameters act as constants)."""
        h = np.asarray([as_scalar(v).value for v in x], dtype=float)
        for layer in range(self.layers):
            h = self.params[f"W{layer}"] @ h + self.params[f"b{layer}"]
            if layer < self.layers - 1:
                h = np.tanh(h)
        return [s(float(v)) for s, v in zip(self.squash, h, strict=True)]

    def copy(self) -> "Mlp":
        return Mlp(self.widths, {k: v.copy() for k, v in self.params.items()}, self.squash)


class BoundMlp:
    """An ``Mlp`` whose parameters live on one tape."""

    def __init__(self, mlp: Mlp, tape: Tape, blocks: dict[str, LeafBlock]) -> None:
        self.mlp = mlp
        self.tape = tape
        self.blocks = blocks

    def __call__(self, x: Sequence[Operand]) -> list[TapeScalar]:
        if len(x) != self.mlp.n_in:
            raise ValueError(f"expected {self.mlp.n_in} inputs, got {len(x)}")
        h = [as_scalar(v) for v in x]
        for layer in range(self.mlp.layers):
            name_w, name_b = f"W{layer}", f"b{layer}"
            h = self.tape.affine(
                h,
                self.mlp.params[name_w],
                self.mlp.params[name_b],
                weight_block=self.blocks[name_w],
                bias_block=self.blocks[name_b],
            )
            if layer < self.mlp.layers - 1:
                h = [tanh(v) for v in h]
        return [s(v) for s, v in zip(self.mlp.squash, h, strict=True)]

    def gradients(self, grad: Gradient) -> dict[str, np.ndarray]:
        return {name: grad.block(block) for name, block in self.blocks.items()}
