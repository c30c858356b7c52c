"""Forward wall time per step as the mesh grows.

Every mesh runs the same number of steps at its own stable time step; the
fitted exponent of time per step against element count should stay at or
below 1.5.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from common import MODEL_PROBLEM, fitted_exponent, mesh_size, scaled_config

from impactopt.config import cfl_limit, resolve_units
from impactopt.scenarios import ImpactProblem

EXPONENT_LIMIT = 1.5


@dataclass
class ScalingResult:
    nx: int
    ny: int
    elements: int
    steps: int
    wall_s: float
    per_step_s: float
    factorizations: int


def run_mesh(args: argparse.Namespace, nx: int, ny: int) -> ScalingResult:
    sizing = scaled_config(args.config, nx, ny, 10**7, threads=args.threads)
    steps_needed = math.ceil(resolve_units(sizing).end_time / cfl_limit(sizing)) + 1
    cfg = scaled_config(args.config, nx, ny, steps_needed, threads=args.threads)
    cfg.time.n_steps = args.steps
    cfg.time.end_time *= args.steps / steps_needed
    problem = ImpactProblem(cfg)
    start = time.perf_counter()
    run = problem.forward(problem.initial_design(), keep_trajectory=False)
    wall = time.perf_counter() - start
    problem.close()
    return ScalingResult(
        nx=nx,
        ny=ny,
        elements=problem.mesh.n_elements,
        steps=args.steps,
        wall_s=wall,
        per_step_s=wall / args.steps,
        factorizations=run.result.n_factorizations,
    )


def format_result(result: ScalingResult) -> str:
    return (
        f"{result.nx:>5}x{result.ny:<4}  {result.elements:>8}  {result.steps:>6}  "
        f"{result.wall_s:>10.2f}  {result.per_step_s * 1e3:>12.3f}"
    )


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Forward solver time scaling with mesh size")
    parser.add_argument("--config", type=Path, default=MODEL_PROBLEM, help="Scenario file")
    parser.add_argument(
        "--meshes",
        type=mesh_size,
        nargs="+",
        default=[(60, 15), (120, 30), (240, 60)],
        help="Meshes to time",
    )
    parser.add_argument("--steps", type=int, default=100, help="Steps per mesh")
    parser.add_argument("--threads", type=int, default=1, help="Worker threads")
    parser.add_argument("--check", action="store_true", help="Exit 1 when the exponent exceeds 1.5")
    parser.add_argument("--json", type=Path, help="Optional path to write results as JSON")
    return parser.parse_args(argv)


def main(argv: list[str]) -> int:
    args = parse_args(argv)
    print(f"Timing {args.steps} forward steps per mesh with {args.threads} thread(s)")
    print("   mesh      elements   steps     wall(s)   per step(ms)")
    results = []
    for nx, ny in args.meshes:
        result = run_mesh(args, nx, ny)
        results.append(result)
        print("  " + format_result(result))

    exponent = fitted_exponent([r.elements for r in results], [r.per_step_s for r in results])
    print(f"\ngrowth exponent {exponent:.3f} (limit {EXPONENT_LIMIT})")

    if args.json:
        payload = {
            "benchmark": "time_scaling",
            "parameters": {
                "config": str(args.config),
                "meshes": args.meshes,
                "steps": args.steps,
                "threads": args.threads,
            },
            "results": [asdict(r) for r in results],
            "exponent": exponent,
        }
        args.json.write_text(json.dumps(payload, indent=2))
    return 1 if args.check and exponent > EXPONENT_LIMIT else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
