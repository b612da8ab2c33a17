"""
Shared pytest fixtures and configuration for all tests.
"""

import json
import os
import sys
import time
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest
from dotenv import load_dotenv
from fastapi.testclient import TestClient

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

# Load test environment variables
load_dotenv(".env.test")

from barrierstl.models.scenario import ScenarioConfig, parse_scenario  # noqa: E402
from barrierstl.models.shapes import Circle, Superellipse  # noqa: E402

REPO_ROOT = Path(__file__).parent.parent
BENCHMARK_PATH = REPO_ROOT / "scenarios" / "benchmark.json"


# ============================================================================
# Common Test Fixtures
# ============================================================================


@pytest.fixture
def mock_env_vars():
    """Fixture to temporarily set environment variables for testing."""
    original_env = os.environ.copy()

    def _set_env(**kwargs):
        for key, value in kwargs.items():
            os.environ[key] = str(value)

    yield _set_env

    os.environ.clear()
    os.environ.update(original_env)


@pytest.fixture
def rng():
    """Seeded generator for randomized property tests."""
    return np.random.default_rng(20240611)


@pytest.fixture
def test_client():
    """Create a FastAPI test client for API endpoint testing."""
    from barrierstl.api.main import create_app  # noqa: PLC0415

    app = create_app(environment="test")
    with TestClient(app) as client:
        yield client


# ============================================================================
# Scenario Fixtures
# ============================================================================


@pytest.fixture
def shape_table():
    """Shapes of the benchmark environment."""
    return {
        "reg1": Circle((3.0, 3.0), 1.0),
        "reg2": Circle((6.5, 2.0), 1.0),
        "obs1": Superellipse((2.0, 1.0), 0.5, 0.5),
        "obs2": Superellipse((4.8, 2.6), 0.5, 0.4),
    }


@pytest.fixture
def benchmark_scenario() -> ScenarioConfig:
    """The shipped two-region, two-obstacle scenario."""
    return parse_scenario(BENCHMARK_PATH.read_text(encoding="utf-8"))


def small_scenario_data(**train) -> dict:
    """A one-second reach/avoid scenario with tiny networks, cheap enough for end-to-end runs."""
    return {
        "schema_version": 1,
        "name": "small",
        "formula": "F[0,1] reg1 & G[0,1] !obs1",
        "shapes": {
            "reg1": {"kind": "circle", "center": [1.2, 1.2], "radius": 0.6},
            "obs1": {"kind": "superellipse", "center": [2.5, 0.2], "a": 0.3, "b": 0.3},
        },
        "init": {"lo": [0.0, 0.0], "hi": [0.4, 0.4]},
        "dynamics": "double_integrator",
        "train": {"batch_size": 2, "iterations": 2, "hidden": [6], "log_every": 1, "lr": 0.01} | train,
    }


@pytest.fixture
def small_scenario() -> ScenarioConfig:
    return parse_scenario(small_scenario_data())


@pytest.fixture
def small_scenario_file(tmp_path) -> Path:
    path = tmp_path / "small.json"
    path.write_text(json.dumps(small_scenario_data()), encoding="utf-8")
    return path


# ============================================================================
# Assertion Helpers
# ============================================================================


class AssertionHelpers:
    """Reusable assertion helpers for tests."""

    @staticmethod
    def assert_between(value: float, min_val: float, max_val: float) -> None:
        """Assert that a value is between min and max."""
        assert min_val <= value <= max_val, f"{value} is not between {min_val} and {max_val}"

    @staticmethod
    def rel_err(a: np.ndarray | float, b: np.ndarray | float) -> float:
        """Largest elementwise |a − b| / max(1, |b|)."""
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))) if a.size else 0.0

    @staticmethod
    def finite_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
        """Central differences of a scalar function of an array, same shape as ``x``."""
        x = np.array(x, dtype=float)
        grad = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            up, down = x.copy(), x.copy()
            up[idx] += h
            down[idx] -= h
            grad[idx] = (fn(up) - fn(down)) / (2.0 * h)
        return grad


@pytest.fixture
def assert_helpers():
    """Provide assertion helpers to tests."""
    return AssertionHelpers()


# ============================================================================
# Performance Testing
# ============================================================================


@pytest.fixture
def benchmark_timer():
    """Simple benchmark timer for performance tests."""

    class Timer:
        def __init__(self):
            self.start_time = None
            self.elapsed = None

        def __enter__(self):
            self.start_time = time.perf_counter()
            return self

        def __exit__(self, *args):
            self.elapsed = time.perf_counter() - self.start_time

    return Timer


# ============================================================================
# Markers and Hooks
# ============================================================================


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line("markers", "unit: Unit tests (no external dependencies)")
    config.addinivalue_line("markers", "integration: Integration tests (end-to-end CLI runs)")
    config.addinivalue_line("markers", "contract: Contract tests (behavioral requirements)")
    config.addinivalue_line("markers", "slow: Slow tests (>1 second)")
    config.addinivalue_line("markers", "smoke: Smoke tests (basic sanity checks)")
