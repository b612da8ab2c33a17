"""
Scenario files.

A scenario bundles the workspace geometry, the STL formula, the initial
condition box, the dynamics and every hyperparameter of synthesis and
training. Scenarios are JSON documents validated by the pydantic models
below; command-line flags only override scalar fields.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from barrierstl.core.exceptions import ConfigValidationError
from barrierstl.models.dynamics import DYNAMICS
from barrierstl.models.shapes import Circle, Shape, Superellipse

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HASHED_FIELDS = {"formula", "shapes", "init", "dynamics", "synthesis"}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CircleConfig(_Strict):
    """Circular predicate region."""

    kind: Literal["circle"] = "circle"
    center: tuple[float, float] = Field(..., description="Center o in position units")
    radius: float = Field(..., gt=0.0, description="Radius R")
    sign: Literal[1, -1] = Field(1, description="+1 reach (inside), -1 avoid (outside)")

    def build(self) -> Circle:
        return Circle(self.center, self.radius, self.sign)


class SuperellipseConfig(_Strict):
    """Rounded-box predicate region |X|^4 + |Y|^4 <= 1."""

    kind: Literal["superellipse"] = "superellipse"
    center: tuple[float, float] = Field(..., description="Center in position units")
    a: float = Field(..., gt=0.0, description="Semi-axis along x")
    b: float = Field(..., gt=0.0, description="Semi-axis along y")
    sign: Literal[1, -1] = Field(1, description="+1 inside, -1 outside")

    def build(self) -> Superellipse:
        return Superellipse(self.center, self.a, self.b, self.sign)


ShapeConfig = Annotated[CircleConfig | SuperellipseConfig, Field(discriminator="kind")]


class InitBox(_Strict):
    """Axis-aligned box of initial positions; velocities start at zero."""

    lo: tuple[float, float] = Field(..., description="Lower-left corner")
    hi: tuple[float, float] = Field(..., description="Upper-right corner")

    @model_validator(mode="after")
    def _nonempty(self) -> "InitBox":
        if not (self.lo[0] < self.hi[0] and self.lo[1] < self.hi[1]):
            raise ValueError(f"init box is empty: lo={self.lo}, hi={self.hi}")
        return self

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1]))


class SynthesisConfig(_Strict):
    """Constants of the HOCBF construction."""

    c: float = Field(0.01, gt=0.0, description="Offset of the exponential gamma template")
    margin: float = Field(1e-3, gt=0.0, description="Margin added to strict inequalities")
    kappa: float = Field(4.0, gt=1.0, description="Cap factor for gamma at t = 0")
    release_mixed_pairs: bool = Field(False, description="Also release reach/avoid pair constraints")


class TrainConfig(_Strict):
    """Training and evaluation hyperparameters."""

    batch_size: int = Field(32, ge=1, description="Episodes per iteration (V)")
    iterations: int = Field(500, ge=0)
    lr: float = Field(1e-3, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    dt: float = Field(0.1, gt=0.0, description="Sampling and integration step in seconds")
    cost_coeff: float = Field(0.003, ge=0.0, description="Weight of the L2 control cost")
    beta: float = Field(0.5, ge=0.0, le=1.0, description="Weight of the min in exponential robustness")
    seed: int = Field(0, ge=0)
    hidden: tuple[int, ...] = Field((64, 64), description="Hidden layer widths of both networks")
    log_every: int = Field(10, ge=1)
    integrator: Literal["euler", "rk4"] = "euler"
    relax_infeasible_qp: bool = Field(False, description="Slack-relax infeasible QPs (diagnostics only)")


class ScenarioConfig(_Strict):
    """A complete, validated scenario."""

    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "scenario"
    formula: str = Field(..., min_length=1, description="Formula in the fragment's concrete syntax")
    shapes: dict[str, ShapeConfig] = Field(..., min_length=1)
    init: InitBox
    dynamics: str = "double_integrator"
    synthesis: SynthesisConfig = SynthesisConfig()
    train: TrainConfig = TrainConfig()
    output_dir: Path | None = None

    @model_validator(mode="after")
    def _known_dynamics(self) -> "ScenarioConfig":
        if self.dynamics not in DYNAMICS:
            raise ValueError(f"unknown dynamics {self.dynamics!r}; known: {', '.join(DYNAMICS)}")
        return self

    def shape_table(self) -> dict[str, Shape]:
        return {name: cfg.build() for name, cfg in self.shapes.items()}

    def config_hash(self) -> str:
        """SHA-256 over the fields that determine the barrier construction."""
        payload = self.model_dump(mode="json", include=HASHED_FIELDS)
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        iterations: int | None = None,
        batch_size: int | None = None,
        output_dir: Path | None = None,
    ) -> "ScenarioConfig":
        """Copy with command-line scalar overrides applied (None keeps the file value)."""
        train = {
            key: value
            for key, value in (("seed", seed), ("iterations", iterations), ("batch_size", batch_size))
            if value is not None
        }
        update: dict = {}
        if train:
            update["train"] = TrainConfig.model_validate(self.train.model_dump() | train)
        if output_dir is not None:
            update["output_dir"] = output_dir
        return self.model_copy(update=update) if update else self


def parse_scenario(data: dict | str) -> ScenarioConfig:
    """Validate a scenario from a mapping or JSON text."""
    try:
        if isinstance(data, str):
            return ScenarioConfig.model_validate_json(data)
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigValidationError(
            f"invalid scenario: {exc.error_count()} validation error(s)",
            errors=[{"loc": list(e["loc"]), "msg": e["msg"]} for e in exc.errors()],
        ) from exc


def load_scenario(path: Path | str) -> ScenarioConfig:
    """Read and validate a scenario JSON file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigValidationError(f"cannot read scenario file {path}: {exc.strerror}", path=str(path)) from exc
    scenario = parse_scenario(text)
    logger.info("Loaded scenario %r from %s (hash %s)", scenario.name, path, scenario.config_hash()[:12])
    return scenario
