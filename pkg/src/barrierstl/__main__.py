"""
Command-line interface entry point for barrier-stl.

Run with ``python -m barrierstl <command>``. Commands: ``train``, ``eval``,
``compare``, ``monitor``, ``ledger`` and ``serve``.

Exit codes: 0 success, 2 user error, 3 infeasibility, 4 internal invariant
failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import uvicorn

from barrierstl import __version__
from barrierstl.core.config import LOG_LEVELS, get_settings
from barrierstl.core.exceptions import BarrierStlError, InvariantError
from barrierstl.models.scenario import load_scenario
from barrierstl.services import runs
from barrierstl.services.training import TRAINABLE_MODES

logger = logging.getLogger("barrierstl")


def setup_logging(level: str = "INFO") -> None:
    """
    Configure logging for the application.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)

    """
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
    )


def run_api(host: str = "127.0.0.1", port: int = 8000, reload: bool = False) -> None:
    """Start the monitor service."""
    logger.info("Starting barrier-stl API v%s", __version__)
    logger.info("API Documentation: http://%s:%d/api/docs", host, port)
    uvicorn.run("barrierstl.api.main:app", host=host, port=port, reload=reload, log_level="info")


def _emit(payload: object) -> None:
    print(json.dumps(payload, indent=2, default=str))


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="barrierstl",
        description=f"barrier-stl v{__version__} - STL-guaranteed controllers with differentiable HOCBF layers",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"barrier-stl {__version__}")
    parser.add_argument(
        "--log-level",
        choices=LOG_LEVELS,
        type=str.upper,
        default=None,
        help="Logging level (default: BARRIERSTL_LOG_LEVEL or INFO)",
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    def scenario_command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("scenario", type=Path, help="Scenario JSON file")
        return sub

    train = scenario_command("train", "Train a BarrierNet or FCNet controller")
    train.add_argument("--mode", choices=TRAINABLE_MODES, default="barriernet")
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--iterations", type=int, default=None)
    train.add_argument("--batch-size", type=int, default=None)
    train.add_argument("--output", type=Path, default=None, help="Output directory")
    train.add_argument("--omit-timing", action="store_true", help="Write wall_ms as 0 for byte-identical curves")

    evaluate = scenario_command("eval", "Evaluate a trained checkpoint")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.add_argument("--trials", type=_non_negative, default=100)
    evaluate.add_argument("--seed", type=int, default=None)
    evaluate.add_argument("--output", type=Path, default=None)
    evaluate.add_argument("--integrator", choices=("euler", "rk4"), default=None)

    compare = scenario_command("compare", "Compare BarrierNet, FCNet and fixed-HOCBF on shared initial states")
    compare.add_argument("--barriernet", type=Path, default=None, help="BarrierNet checkpoint")
    compare.add_argument("--fcnet", type=Path, default=None, help="FCNet checkpoint")
    compare.add_argument("--trials", type=_non_negative, default=100)
    compare.add_argument("--seed", type=int, default=None)
    compare.add_argument("--output", type=Path, default=None)

    monitor = scenario_command("monitor", "Robustness and verdict of a trajectory CSV")
    monitor.add_argument("trajectory", type=Path)
    monitor.add_argument("--formula", default=None, help="Formula overriding the scenario's")
    monitor.add_argument("--beta", type=float, default=None)

    ledger = scenario_command("ledger", "Print the synthesized HOCBF constraint ledger")
    ledger.add_argument("--x0", type=float, nargs=2, metavar=("PX", "PY"), default=None)

    serve = subparsers.add_parser("serve", help="Start the monitor API server")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--reload", action="store_true")
    return parser


def dispatch(args: argparse.Namespace) -> int:
    """Run the selected command; library errors propagate to ``main``."""
    if args.command == "serve":
        run_api(args.host, args.port, args.reload)
        return 0

    scenario = load_scenario(args.scenario)
    if args.command == "train":
        scenario = scenario.with_overrides(
            seed=args.seed,
            iterations=args.iterations,
            batch_size=args.batch_size,
            output_dir=args.output,
        )
        outcome = runs.cmd_train(scenario, args.mode, omit_timing=args.omit_timing)
        _emit(outcome.summary)
    elif args.command == "eval":
        outcome = runs.cmd_eval(scenario, args.checkpoint, args.trials, args.seed, args.output, args.integrator)
        _emit(outcome.summary)
    elif args.command == "compare":
        checkpoints = {m: getattr(args, m) for m in TRAINABLE_MODES if getattr(args, m) is not None}
        outcome, _ = runs.cmd_compare(scenario, checkpoints, args.trials, args.seed, args.output)
        _emit(outcome.summary)
    elif args.command == "monitor":
        result = runs.cmd_monitor(scenario, args.trajectory, args.formula, args.beta)
        _emit(
            {
                "formula": result.formula,
                "robustness": result.robustness,
                "verdict": "satisfied" if result.satisfied else "violated",
                "horizon": result.horizon,
                "samples": result.samples,
            }
        )
    elif args.command == "ledger":
        _emit(runs.cmd_ledger(scenario, tuple(args.x0) if args.x0 else None))
    return 0


def main(argv: list[str] | None = None) -> int:
    """
    Run the main CLI entry point.

    Returns:
        Exit code (0 for success, non-zero for failure)

    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level or get_settings().log_level)

    if not args.command:
        parser.print_help()
        return 2

    try:
        return dispatch(args)
    except BarrierStlError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.message)
        for key, value in exc.details.items():
            logger.error("  %s: %s", key, value)
        return exc.exit_code
    except Exception:
        logger.exception("Unexpected failure")
        return InvariantError.exit_code


if __name__ == "__main__":
    sys.exit(main())
