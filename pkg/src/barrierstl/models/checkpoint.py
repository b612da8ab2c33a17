"""Checkpoint and run-manifest files."""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from barrierstl.core.exceptions import CheckpointMismatchError, ConfigValidationError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
MANIFEST_VERSION = 1


class NetworkState(BaseModel):
    widths: list[int]
    params: dict[str, list] = Field(..., description="Parameter arrays as nested lists")

    @classmethod
    def from_arrays(cls, widths: tuple[int, ...], params: dict[str, np.ndarray]) -> "NetworkState":
        return cls(widths=list(widths), params={k: v.tolist() for k, v in params.items()})

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v, dtype=float) for k, v in self.params.items()}


class Checkpoint(BaseModel):
    """Trained network weights tied to one scenario construction."""

    schema_version: Literal[1] = CHECKPOINT_VERSION
    mode: Literal["barriernet", "fcnet"]
    config_hash: str
    seed: int
    iterations: int
    networks: dict[str, NetworkState]

    def save(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=1), encoding="utf-8")
        logger.info("Wrote checkpoint %s", path)
        return path

    @classmethod
    def load(cls, path: Path, config_hash: str | None = None, mode: str | None = None) -> "Checkpoint":
        """Read ``path``; reject it when it was trained for another scenario or mode."""
        try:
            checkpoint = cls.model_validate_json(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigValidationError(f"cannot read checkpoint {path}: {exc.strerror}", path=str(path)) from exc
        except ValidationError as exc:
            raise ConfigValidationError(f"invalid checkpoint {path}: {exc.error_count()} error(s)") from exc
        if config_hash is not None and checkpoint.config_hash != config_hash:
            raise CheckpointMismatchError(
                f"checkpoint {path} was trained for scenario {checkpoint.config_hash[:12]}, not {config_hash[:12]}",
                expected=config_hash,
                found=checkpoint.config_hash,
            )
        if mode is not None and checkpoint.mode != mode:
            raise CheckpointMismatchError(f"checkpoint {path} holds a {checkpoint.mode} controller, not {mode}")
        return checkpoint


class RunManifest(BaseModel):
    """Record of one command invocation and the files it wrote."""

    schema_version: Literal[1] = MANIFEST_VERSION
    command: str
    scenario: str
    config_hash: str
    seed: int
    created: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    versions: dict[str, str] = Field(default_factory=dict)
    files: list[str] = Field(default_factory=list)
    summary: dict = Field(default_factory=dict)

    def save(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8")
        logger.info("Wrote manifest %s", path)
        return path
