"""Helpers shared by the benchmark drivers."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from impactopt.config import RunConfig, parse_config_dict

ROOT = Path(__file__).resolve().parent.parent
MODEL_PROBLEM = ROOT / "scenarios" / "model_problem.json"


def mesh_size(text: str) -> tuple[int, int]:
    """``"60x15"`` -> ``(60, 15)``."""
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected NXxNY, got {text!r}") from exc
    if nx < 1 or ny < 1:
        raise argparse.ArgumentTypeError(f"element counts must be positive, got {text!r}")
    return nx, ny


def scaled_config(
    path: Path,
    nx: int,
    ny: int,
    n_steps: int,
    end_time: float | None = None,
    threads: int = 1,
) -> RunConfig:
    data = json.loads(Path(path).read_text())
    data["geometry"].update(nx=nx, ny=ny)
    data["time"]["n_steps"] = n_steps
    if end_time is not None:
        data["time"]["end_time"] = end_time
    data["threads"] = threads
    return parse_config_dict(data)


def fitted_exponent(x: list[float], y: list[float]) -> float:
    """Slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
