"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 failed
gradient check, 1 any other I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import RunConfig, dump_config, parse_config
from .errors import BudgetExceededError, ConfigError, InvalidArgumentError, SolverError
from .optimizer import run_optimization
from .output import SnapshotWriter, write_diagnostics, write_rows
from .parallel import ChunkedExecutor, default_threads
from .scenarios import ImpactProblem

logger = logging.getLogger("impactopt")

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4

MODES = ("forward", "adjoint-check", "optimize")


def parse_args(argv: List[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="impactopt",
        description="Phase-field damage dynamics, adjoint gradients and topology optimization",
    )
    parser.add_argument("--mode", choices=MODES, required=True, help="What to run")
    parser.add_argument("--config", type=Path, required=True, help="Scenario JSON file")
    parser.add_argument("--output-dir", type=Path, required=True, help="Directory for all artifacts")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker threads (default: the config value, else every core)",
    )
    parser.add_argument("--stride", type=int, default=None, help="Snapshot every K steps")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="Logging verbosity",
    )
    parser.add_argument("--resume", action="store_true", help="Continue optimize mode from its checkpoint")
    return parser.parse_args(argv)


def configure_logging(level: str, log_file: Optional[Path]) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file is not None:
        handlers.append(logging.FileHandler(log_file, mode="a"))
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers,
        force=True,
    )


def run_forward_mode(problem: ImpactProblem, cfg: RunConfig, out: Path) -> int:
    eta = problem.initial_design()
    design = problem.design(eta)
    writer = SnapshotWriter(out / "snapshots", design.eta_phys, cfg.time.n_steps, cfg.output.stride)
    spill = out / "trajectory" if cfg.output.spill else None
    run = problem.forward(eta, spill_dir=spill, observer=writer)
    write_diagnostics(out / "diagnostics.csv", run.result.reports)
    value = problem.objective(run).value
    (out / "objective.json").write_text(json.dumps(value.as_dict(), indent=2) + "\n")
    logger.info(
        "forward done: %d snapshots, O=%.6e, %d factorizations",
        len(writer.written),
        value.total,
        run.result.n_factorizations,
    )
    return EXIT_OK


def run_check_mode(problem: ImpactProblem, out: Path) -> int:
    try:
        report = problem.gradient_check()
    except BudgetExceededError as exc:
        logger.error("%s", exc)
        if exc.partial is not None:
            exc.partial.write_csv(out / "gradient_check.csv")
        return EXIT_CHECK
    report.write_csv(out / "gradient_check.csv")
    if not report.passed:
        logger.error(
            "gradient check failed: max rel. error %.3e > %.1e", report.max_rel_error, report.tolerance
        )
        return EXIT_CHECK
    logger.info("gradient check passed: max rel. error %.3e", report.max_rel_error)
    return EXIT_OK


def run_optimize_mode(problem: ImpactProblem, cfg: RunConfig, out: Path, resume: bool) -> int:
    if problem.kind == "solid":
        raise ConfigError(["optimize mode needs a solid-void or two-material design"])
    result = run_optimization(problem, problem.initial_design(), cfg.optimizer, out, resume=resume)
    np.save(out / "final_design_physical.npy", problem.design(result.eta).eta_phys)
    write_rows(
        out / "summary.csv",
        ("iterations", "converged", "final_objective", "volume"),
        [
            {
                "iterations": result.iterations,
                "converged": int(result.converged),
                "final_objective": result.history[-1]["total"] if result.history else float("nan"),
                "volume": problem.constraint.fraction(result.eta),
            }
        ],
    )
    status = "converged" if result.converged else "stopped"
    logger.info("optimization %s after %d iterations", status, result.iterations)
    return EXIT_OK


def run(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    if args.stride is not None:
        if args.stride < 1:
            raise ConfigError([f"--stride must be >= 1, got {args.stride}"])
        cfg.output.stride = args.stride
    threads = args.threads or cfg.threads or default_threads()
    if threads < 1:
        raise ConfigError([f"--threads must be >= 1, got {threads}"])
    out = args.output_dir
    dump_config(cfg, out / "config.json")
    with ChunkedExecutor(threads) as executor:
        problem = ImpactProblem(cfg, executor)
        if args.mode == "forward":
            return run_forward_mode(problem, cfg, out)
        if args.mode == "adjoint-check":
            return run_check_mode(problem, out)
        return run_optimize_mode(problem, cfg, out, args.resume)


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    try:
        args.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"impactopt: cannot create {args.output_dir}: {exc}", file=sys.stderr)
        return EXIT_IO
    configure_logging(args.log_level, args.output_dir / "run.log")
    try:
        return run(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except InvalidArgumentError as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_CONFIG
    except SolverError as exc:
        logger.error("solver failure: %s", exc)
        if exc.diagnostics:
            logger.error("diagnostics: %s", {k: v for k, v in exc.diagnostics.items() if k != "history"})
        return EXIT_SOLVER
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
