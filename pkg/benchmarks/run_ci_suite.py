"""Run a reduced benchmark suite for CI builds."""

from __future__ import annotations

import argparse
import subprocess
import sys
from pathlib import Path

CONVERGENCE_PARAMS = [
    "--meshes",
    "16x4",
    "32x8",
    "--reference",
    "64x16",
    "--base-steps",
    "200",
    "--end-time",
    "4.0",
    "--samples",
    "10",
]

SCALING_PARAMS = [
    "--meshes",
    "30x8",
    "60x15",
    "120x30",
    "--steps",
    "40",
]

HEALTH_PARAMS = [
    "--mesh",
    "30x8",
    "--steps",
    "750",
]


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Run CI benchmark suite")
    parser.add_argument(
        "--dist",
        type=Path,
        default=Path("dist"),
        help="Directory containing built wheels",
    )
    parser.add_argument(
        "--results-dir",
        type=Path,
        default=Path("benchmark-results"),
        help="Directory where intermediate JSON files should be written",
    )
    parser.add_argument(
        "--output",
        type=Path,
        default=Path("benchmark-results.json"),
        help="Aggregated JSON output path",
    )
    return parser.parse_args(argv)


def pick_wheel(dist_dir: Path) -> Path:
    wheels = sorted(dist_dir.glob("impactopt-*.whl"))
    if not wheels:
        raise FileNotFoundError(f"No wheels found in {dist_dir}")
    return wheels[-1]


def run_command(cmd: list[str]) -> None:
    subprocess.check_call(cmd)


def main(argv: list[str]) -> int:
    args = parse_args(argv)
    args.results_dir.mkdir(parents=True, exist_ok=True)

    wheel_path = pick_wheel(args.dist)
    run_command([sys.executable, "-m", "pip", "install", "--upgrade", "pip"])
    run_command([sys.executable, "-m", "pip", "install", str(wheel_path)])

    convergence_json = args.results_dir / "mesh_convergence.json"
    scaling_json = args.results_dir / "time_scaling.json"
    health_json = args.results_dir / "admm_health.json"

    run_command(
        [
            sys.executable,
            "benchmarks/mesh_convergence.py",
            *CONVERGENCE_PARAMS,
            "--json",
            str(convergence_json),
        ]
    )
    run_command([sys.executable, "benchmarks/time_scaling.py", *SCALING_PARAMS, "--json", str(scaling_json)])
    run_command([sys.executable, "benchmarks/admm_health.py", *HEALTH_PARAMS, "--json", str(health_json)])

    run_command(
        [
            sys.executable,
            "benchmarks/aggregate_ci_results.py",
            "--output",
            str(args.output),
            str(convergence_json),
            str(scaling_json),
            str(health_json),
        ]
    )

    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
