"""
Command implementations behind the CLI.

Every command takes a validated scenario, writes its artifacts under one
output directory and records them in a run manifest.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from barrierstl.core.config import get_settings
from barrierstl.models.checkpoint import Checkpoint, RunManifest
from barrierstl.models.dynamics import get_dynamics
from barrierstl.models.scenario import ScenarioConfig
from barrierstl.services import reporting
from barrierstl.services.stl import format_formula, horizon, parse, robustness, satisfies
from barrierstl.services.training import (
    MODES,
    EvalReport,
    Problem,
    evaluate,
    from_checkpoint,
    make_controller,
    prepare,
    to_checkpoint,
    train,
)

logger = logging.getLogger(__name__)

SVG_PATHS_PER_METHOD = 20
VERSIONED_PACKAGES = ("barrier-stl", "numpy", "scipy", "pydantic")


@dataclass
class RunOutcome:
    """What a command produced."""

    output_dir: Path
    files: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def package_versions() -> dict[str, str]:
    versions = {}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def output_dir(scenario: ScenarioConfig, override: Path | None = None) -> Path:
    """``--output``, else the scenario's directory, else <settings.output_dir>/<scenario name>."""
    if override is not None:
        return Path(override)
    if scenario.output_dir is not None:
        return scenario.output_dir
    return get_settings().output_dir / scenario.name


def _write_manifest(command: str, scenario: ScenarioConfig, seed: int, outcome: RunOutcome) -> Path:
    manifest = RunManifest(
        command=command,
        scenario=scenario.name,
        config_hash=scenario.config_hash(),
        seed=seed,
        versions=package_versions(),
        files=[str(p.relative_to(outcome.output_dir)) for p in outcome.files],
        summary=outcome.summary,
    )
    path = manifest.save(outcome.output_dir / f"manifest_{command}.json")
    outcome.files.append(path)
    return path


def _avoid_names(problem: Problem) -> set[str]:
    return {spec.term.name for spec in problem.specs if spec.sign < 0}


def _positions(problem: Problem, report: EvalReport) -> list[np.ndarray]:
    i, j = problem.dynamics.position_indices
    return [e.trajectory.state_values()[:, [i, j]] for e in report.episodes[:SVG_PATHS_PER_METHOD]]


def _write_episodes(problem: Problem, report: EvalReport, out: Path) -> list[Path]:
    folder = out / "trajectories"
    return [
        reporting.write_trajectory_csv(folder / f"{report.method}_{n:03d}.csv", episode, problem.dynamics)
        for n, episode in enumerate(report.episodes)
    ]


# ============================================================================
# Commands
# ============================================================================


def cmd_train(
    scenario: ScenarioConfig,
    mode: str = "barriernet",
    output: Path | None = None,
    omit_timing: bool = False,
) -> RunOutcome:
    """Train ``mode`` and write its checkpoint, learning curve and manifest."""
    problem = prepare(scenario)
    cfg = scenario.train
    out = output_dir(scenario, output)
    result = train(problem, mode, cfg)
    outcome = RunOutcome(out)
    outcome.files.append(to_checkpoint(problem, result, cfg).save(out / f"{mode}.ckpt.json"))
    outcome.files.append(reporting.write_curves_csv(out / f"curves_{mode}.csv", result.curve, omit_timing))
    outcome.files.append(reporting.render_curves_svg(out / f"curves_{mode}.svg", {mode: result.curve}))
    last = result.curve[-1] if result.curve else None
    outcome.summary = {
        "mode": mode,
        "iterations": len(result.curve),
        "violating_episodes": result.violations,
        "final_mean_robustness": last.mean_robustness if last else None,
        "final_min_robustness": last.min_robustness if last else None,
    }
    _write_manifest(f"train_{mode}", scenario, cfg.seed, outcome)
    logger.info("Training finished; artifacts in %s", out)
    return outcome


def cmd_eval(
    scenario: ScenarioConfig,
    checkpoint: Path,
    trials: int,
    seed: int | None = None,
    output: Path | None = None,
    integrator: str | None = None,
) -> RunOutcome:
    """Evaluate one trained controller on ``trials`` fresh initial states."""
    problem = prepare(scenario)
    seed = scenario.train.seed if seed is None else seed
    out = output_dir(scenario, output)
    controller = from_checkpoint(problem, Checkpoint.load(checkpoint, scenario.config_hash()))
    report = evaluate(problem, controller, trials, seed, integrator)
    outcome = RunOutcome(out, summary={"reports": [report.summary()]})
    outcome.files.append(reporting.write_report_csv(out / f"eval_{report.method}.csv", [report]))
    outcome.files.extend(_write_episodes(problem, report, out))
    outcome.files.append(
        reporting.render_environment_svg(
            out / f"eval_{report.method}.svg",
            scenario,
            {report.method: _positions(problem, report)},
            _avoid_names(problem),
        )
    )
    _write_manifest("eval", scenario, seed, outcome)
    return outcome


def cmd_compare(
    scenario: ScenarioConfig,
    checkpoints: Mapping[str, Path],
    trials: int,
    seed: int | None = None,
    output: Path | None = None,
) -> tuple[RunOutcome, list[EvalReport]]:
    """
    Evaluate the trained controllers in ``checkpoints`` and the fixed-HOCBF baseline.

    All methods see the same initial states. A trained mode without a
    checkpoint is skipped.
    """
    problem = prepare(scenario)
    seed = scenario.train.seed if seed is None else seed
    out = output_dir(scenario, output)
    reports = []
    for mode in MODES:
        if mode == "fixed_hocbf":
            controller = make_controller(problem, mode, seed)
        elif mode in checkpoints:
            controller = from_checkpoint(problem, Checkpoint.load(checkpoints[mode], scenario.config_hash(), mode))
        else:
            logger.warning("No checkpoint for %s; skipping it", mode)
            continue
        reports.append(evaluate(problem, controller, trials, seed))
    outcome = RunOutcome(out, summary={"reports": [r.summary() for r in reports]})
    outcome.files.append(reporting.write_report_csv(out / "compare.csv", reports))
    for report in reports:
        outcome.files.extend(_write_episodes(problem, report, out))
    outcome.files.append(
        reporting.render_environment_svg(
            out / "compare.svg",
            scenario,
            {r.method: _positions(problem, r) for r in reports},
            _avoid_names(problem),
        )
    )
    _write_manifest("compare", scenario, seed, outcome)
    return outcome, reports


@dataclass(frozen=True)
class MonitorResult:
    formula: str
    robustness: float
    satisfied: bool
    horizon: float
    samples: int


def cmd_monitor(
    scenario: ScenarioConfig,
    trajectory: Path,
    formula: str | None = None,
    beta: float | None = None,
) -> MonitorResult:
    """Robustness and verdict of a recorded trajectory (the scenario's formula unless ``formula`` is given)."""
    dynamics = get_dynamics(scenario.dynamics)
    phi = parse(formula or scenario.formula, scenario.shape_table())
    traj = reporting.read_trajectory_csv(trajectory, dynamics)
    rho = robustness(phi, traj, 0.0, scenario.train.beta if beta is None else beta)
    result = MonitorResult(format_formula(phi), rho.value, satisfies(phi, traj, 0.0), horizon(phi), len(traj))
    logger.info("%s: rho = %+.6f (%s)", trajectory, result.robustness, "satisfied" if result.satisfied else "violated")
    return result


def cmd_ledger(scenario: ScenarioConfig, x0: tuple[float, float] | None = None) -> dict:
    """The synthesized HOCBFs and the γ intervals they admit at ``x0`` (default: Init center)."""
    problem = prepare(scenario)
    position = x0 or scenario.init.center
    state = problem.dynamics.rest_state(*position)
    squashed = problem.ledger.squash([0.0] * problem.ledger.raw_size, state, problem.dynamics.position_indices)
    rows = problem.ledger.describe()
    for spec, row in zip(problem.specs, rows, strict=True):
        row["intervals"] = {
            name: [b if math.isfinite(b) else None for b in bounds]
            for name, bounds in squashed.intervals.get(spec.index, {}).items()
        }
    return {
        "formula": format_formula(problem.formula),
        "config_hash": scenario.config_hash(),
        "x0": list(position),
        "raw_outputs": problem.ledger.raw_size,
        "specs": rows,
    }
