"""ADMM exit conditions and factorization reuse on the model problem.

Every accepted step must keep both residuals under their tolerance
formulas. ``K + r S`` is factorized at most once per distinct penalty, plus
once for the mass matrix of the multiplier update; the distinct penalties
are bounded by the penalty range.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from common import MODEL_PROBLEM, mesh_size, scaled_config

from impactopt.config import parse_config
from impactopt.scenarios import ImpactProblem


@dataclass
class HealthResult:
    steps: int
    wall_s: float
    max_iterations: int
    mean_iterations: float
    damaged_steps: int
    residual_violations: int
    distinct_penalties: int
    factorizations: int
    penalty_bound: float

    @property
    def healthy(self) -> bool:
        return (
            self.residual_violations == 0
            and self.factorizations <= self.distinct_penalties + 1
            and self.distinct_penalties <= self.penalty_bound
        )


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="ADMM health on the model problem")
    parser.add_argument("--config", type=Path, default=MODEL_PROBLEM, help="Scenario file")
    parser.add_argument("--mesh", type=mesh_size, default=None, help="Override the mesh, e.g. 30x8")
    parser.add_argument("--steps", type=int, default=None, help="Override the step count")
    parser.add_argument("--threads", type=int, default=1, help="Worker threads")
    parser.add_argument("--json", type=Path, help="Optional path to write results as JSON")
    return parser.parse_args(argv)


def load_config(args: argparse.Namespace):
    base = parse_config(args.config)
    if args.mesh is None and args.steps is None:
        base.threads = args.threads
        return base
    nx, ny = args.mesh or (base.geometry.nx, base.geometry.ny)
    return scaled_config(args.config, nx, ny, args.steps or base.time.n_steps, threads=args.threads)


def main(argv: list[str]) -> int:
    args = parse_args(argv)
    cfg = load_config(args)
    admm = cfg.solver.admm
    problem = ImpactProblem(cfg)
    print(
        f"{cfg.geometry.nx}x{cfg.geometry.ny}, {cfg.time.n_steps} steps, "
        f"tol_abs={admm.tol_abs:g}, tol_rel={admm.tol_rel:g}"
    )
    start = time.perf_counter()
    run = problem.forward(problem.initial_design(), keep_trajectory=False)
    wall = time.perf_counter() - start
    problem.close()

    reports = run.result.reports
    iterations = np.array([r.admm_iterations for r in reports])
    bad = [r for r in reports if r.r_p > r.tol_p or r.r_d > r.tol_d]
    for r in bad[:10]:
        print(f"  step {r.step}: r_p={r.r_p:.3e} (tol {r.tol_p:.3e}), r_d={r.r_d:.3e} (tol {r.tol_d:.3e})")
    result = HealthResult(
        steps=len(reports),
        wall_s=wall,
        max_iterations=int(iterations.max()),
        mean_iterations=float(iterations.mean()),
        damaged_steps=sum(1 for r in reports if r.max_alpha > 0.0),
        residual_violations=len(bad),
        distinct_penalties=len(run.result.penalties),
        factorizations=run.result.n_factorizations,
        penalty_bound=math.log(admm.r_max / admm.r_min, admm.gamma_r) + 1.0,
    )
    width = max(len(name) for name in asdict(result))
    for name, value in asdict(result).items():
        print(f"  {name:<{width}}  {value}")
    print("healthy" if result.healthy else "UNHEALTHY")

    if args.json:
        payload = {
            "benchmark": "admm_health",
            "parameters": {
                "config": str(args.config),
                "mesh": [cfg.geometry.nx, cfg.geometry.ny],
                "steps": cfg.time.n_steps,
                "tol_abs": admm.tol_abs,
                "tol_rel": admm.tol_rel,
            },
            "results": [{**asdict(result), "healthy": result.healthy}],
        }
        args.json.write_text(json.dumps(payload, indent=2))
    return 0 if result.healthy else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
