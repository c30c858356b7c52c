"""Mesh convergence of the model problem against a fine reference mesh.

The error is the L2-in-time, H1-in-space norm of ``u_h - u_ref``, sampled at
shared times with the coarse fields interpolated onto the reference nodes.
Step counts scale with ``nx`` so every mesh runs at the same CFL number.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from common import MODEL_PROBLEM, fitted_exponent, mesh_size, scaled_config

from impactopt.mesh import h1_gram, interpolate_at_points
from impactopt.scenarios import ImpactProblem

RATE_RANGE = (1.0, 1.7)


@dataclass
class MeshRun:
    nx: int
    ny: int
    h: float
    steps: int
    wall_s: float
    error: float = 0.0


def sampled_run(
    args: argparse.Namespace, nx: int, ny: int
) -> tuple[MeshRun, ImpactProblem, list[np.ndarray]]:
    first_nx = args.meshes[0][0]
    steps = args.base_steps * nx // first_nx
    if steps % args.samples:
        raise SystemExit(f"{steps} steps on {nx}x{ny} are not divisible into {args.samples} samples")
    cfg = scaled_config(args.config, nx, ny, steps, args.end_time, args.threads)
    problem = ImpactProblem(cfg)
    every = steps // args.samples
    samples: list[np.ndarray] = []

    def keep(model, state) -> None:
        if state.step and state.step % every == 0:
            samples.append(state.u.copy())

    start = time.perf_counter()
    problem.forward(problem.initial_design(), observer=keep, keep_trajectory=False)
    wall = time.perf_counter() - start
    problem.close()
    return MeshRun(nx, ny, cfg.geometry.L / nx, steps, wall), problem, samples


def format_result(run: MeshRun) -> str:
    return f"{run.nx:>5}x{run.ny:<4}  {run.h:>10.5f}  {run.steps:>7}  {run.error:>14.6e}  {run.wall_s:>10.2f}"


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Model-problem mesh convergence study")
    parser.add_argument("--config", type=Path, default=MODEL_PROBLEM, help="Model-problem scenario file")
    parser.add_argument(
        "--meshes",
        type=mesh_size,
        nargs="+",
        default=[(30, 8), (60, 15), (120, 30)],
        help="Meshes to measure, coarsest first",
    )
    parser.add_argument("--reference", type=mesh_size, default=(240, 60), help="Reference mesh")
    parser.add_argument("--base-steps", type=int, default=750, help="Step count on the coarsest mesh")
    parser.add_argument(
        "--end-time",
        type=float,
        default=None,
        help="Horizon in units of L/c_L (default: the scenario value)",
    )
    parser.add_argument("--samples", type=int, default=10, help="Time samples in the error norm")
    parser.add_argument("--threads", type=int, default=1, help="Worker threads per run")
    parser.add_argument("--check", action="store_true", help="Exit 1 when the rate is outside [1.0, 1.7]")
    parser.add_argument("--json", type=Path, help="Optional path to write results as JSON")
    return parser.parse_args(argv)


def main(argv: list[str]) -> int:
    args = parse_args(argv)
    ref_run, ref_problem, ref_samples = sampled_run(args, *args.reference)
    ref_mesh = ref_problem.mesh
    gram = h1_gram(ref_mesh, np.arange(ref_mesh.n_elements))
    sample_dt = ref_problem.units.end_time / args.samples
    print(f"reference {ref_run.nx}x{ref_run.ny}: {ref_run.steps} steps in {ref_run.wall_s:.1f} s")

    print("   mesh            h    steps     ||u_h-u_ref||     wall(s)")
    runs: list[MeshRun] = []
    for nx, ny in args.meshes:
        run, problem, samples = sampled_run(args, nx, ny)
        total = 0.0
        for coarse, fine in zip(samples, ref_samples):
            err = (fine - interpolate_at_points(problem.mesh, coarse, ref_mesh.node_coords)).ravel()
            total += sample_dt * float(err @ (gram @ err))
        run.error = float(np.sqrt(total))
        runs.append(run)
        print("  " + format_result(run))

    rate = fitted_exponent([r.h for r in runs], [r.error for r in runs])
    inside = RATE_RANGE[0] <= rate <= RATE_RANGE[1]
    print(f"\nfitted convergence rate {rate:.3f} ({'inside' if inside else 'outside'} {list(RATE_RANGE)})")

    if args.json:
        payload = {
            "benchmark": "mesh_convergence",
            "parameters": {
                "config": str(args.config),
                "meshes": args.meshes,
                "reference": args.reference,
                "base_steps": args.base_steps,
                "end_time": args.end_time,
                "samples": args.samples,
            },
            "reference": asdict(ref_run),
            "results": [asdict(r) for r in runs],
            "rate": rate,
        }
        args.json.write_text(json.dumps(payload, indent=2))
    return 1 if args.check and not inside else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
