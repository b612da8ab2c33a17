"""
Tests for checkpoint and manifest files.
"""

import json

import numpy as np
import pytest

from barrierstl.core.exceptions import CheckpointMismatchError, ConfigValidationError
from barrierstl.models.checkpoint import Checkpoint, NetworkState, RunManifest


@pytest.fixture
def checkpoint():
    params = {"W0": np.arange(6.0).reshape(3, 2), "b0": np.zeros(3)}
    return Checkpoint(
        mode="barriernet",
        config_hash="a" * 64,
        seed=3,
        iterations=10,
        networks={"refnet": NetworkState.from_arrays((2, 3), params)},
    )


@pytest.mark.unit
def test_checkpoint_round_trip(tmp_path, checkpoint):
    path = checkpoint.save(tmp_path / "ckpt" / "bn.json")
    loaded = Checkpoint.load(path, config_hash="a" * 64, mode="barriernet")
    arrays = loaded.networks["refnet"].arrays()
    np.testing.assert_array_equal(arrays["W0"], np.arange(6.0).reshape(3, 2))
    assert loaded.seed == 3
    assert loaded.schema_version == 1


@pytest.mark.unit
def test_checkpoint_for_another_scenario_is_rejected(tmp_path, checkpoint):
    path = checkpoint.save(tmp_path / "bn.json")
    with pytest.raises(CheckpointMismatchError, match="trained for scenario"):
        Checkpoint.load(path, config_hash="b" * 64)
    with pytest.raises(CheckpointMismatchError, match="fcnet"):
        Checkpoint.load(path, mode="fcnet")


@pytest.mark.unit
def test_unreadable_or_invalid_checkpoint(tmp_path):
    with pytest.raises(ConfigValidationError, match="cannot read"):
        Checkpoint.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mode": "magic"}), encoding="utf-8")
    with pytest.raises(ConfigValidationError, match="invalid checkpoint"):
        Checkpoint.load(bad)


@pytest.mark.unit
def test_manifest_is_sorted_json(tmp_path):
    path = RunManifest(command="train", scenario="s", config_hash="c", seed=1, files=["a.csv"]).save(
        tmp_path / "manifest.json"
    )
    data = json.loads(path.read_text())
    assert list(data) == sorted(data)
    assert data["files"] == ["a.csv"]
    assert data["schema_version"] == 1
