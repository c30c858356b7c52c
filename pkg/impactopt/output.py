"""Field snapshots as VTK unstructured grids and scalar time series as CSV.

Snapshots carry nodal displacement (in units of ``L``) and nodal damage, and
per-element design density, hardening, damage and plastic-strain magnitude,
the last three averaged over the Gauss points of each element.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import meshio
import numpy as np

from .errors import InvalidArgumentError
from .forward import DynamicModel, ForwardState, StepReport
from .mesh import Mesh2D

logger = logging.getLogger(__name__)

CELL_FIELDS = ("eta", "hardening", "damage_gp", "plastic_strain")


@dataclass
class FieldSnapshot:
    """Nodal ``u`` and ``a``, element ``eta`` and element averages of Gauss-point fields.

    ``eta`` is zero outside the design block.
    """

    step: int
    time: float
    displacement: np.ndarray
    damage: np.ndarray
    eta: np.ndarray
    hardening: np.ndarray
    damage_gp: np.ndarray
    plastic_strain: np.ndarray

    @classmethod
    def from_state(cls, model: DynamicModel, state: ForwardState, eta_phys: np.ndarray) -> "FieldSnapshot":
        mesh = model.mesh
        damage = np.zeros(mesh.n_nodes)
        damage[model.space.nodes] = state.a
        eta = np.zeros(mesh.n_elements)
        eta[model.design] = eta_phys
        gp = state.gp
        magnitude = np.sqrt(np.einsum("gij,gij->g", gp.eps_p, gp.eps_p))
        return cls(
            step=state.step,
            time=state.time,
            displacement=np.asarray(state.u, dtype=float),
            damage=damage,
            eta=eta,
            hardening=_element_mean(gp.q),
            damage_gp=_element_mean(gp.alpha),
            plastic_strain=_element_mean(magnitude),
        )


def _element_mean(gauss_values: np.ndarray) -> np.ndarray:
    return np.asarray(gauss_values).reshape(-1, 4).mean(axis=1)


def _padded(values: np.ndarray) -> np.ndarray:
    """VTK stores points and vectors with three components."""
    return np.column_stack([values, np.zeros(len(values))])


def snapshot_mesh(mesh: Mesh2D, snap: FieldSnapshot) -> meshio.Mesh:
    if snap.displacement.shape != (mesh.n_nodes, 2) or snap.eta.shape != (mesh.n_elements,):
        raise InvalidArgumentError("snapshot fields do not match the mesh")
    return meshio.Mesh(
        points=_padded(mesh.node_coords.astype(np.float64)),
        cells=[("quad", mesh.elements.astype(np.int64))],
        point_data={"displacement": _padded(snap.displacement), "damage": snap.damage},
        cell_data={name: [np.asarray(getattr(snap, name), dtype=np.float64)] for name in CELL_FIELDS},
    )


def write_snapshot(path: Path, mesh: Mesh2D, snap: FieldSnapshot) -> Path:
    """Write one snapshot as legacy text VTK; floats are written at full round-trip precision."""
    path = Path(path)
    data = snapshot_mesh(mesh, snap)
    try:
        meshio.write(path, data, file_format="vtk", binary=False)
    except OSError as exc:
        raise OSError(f"could not write snapshot {path}: {exc}") from exc
    return path


def read_cell_field(path: Path, name: str) -> np.ndarray:
    """Read one cell field back from a snapshot written by :func:`write_snapshot`."""
    data = meshio.read(Path(path), file_format="vtk")
    if name not in data.cell_data:
        raise InvalidArgumentError(f"{path} has no cell field {name!r}")
    return np.concatenate([np.asarray(block, dtype=np.float64).ravel() for block in data.cell_data[name]])


class SnapshotWriter:
    """Forward observer writing every ``stride``-th step and the last one.

    It only reads the state, so attaching it never changes the trajectory.
    """

    def __init__(self, out_dir: Path, eta_phys: np.ndarray, n_steps: int, stride: int) -> None:
        if stride < 1:
            raise InvalidArgumentError(f"stride must be >= 1, got {stride}")
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.eta_phys = np.asarray(eta_phys)
        self.n_steps = n_steps
        self.stride = stride
        self.written: List[Path] = []

    def __call__(self, model: DynamicModel, state: ForwardState) -> None:
        if state.step == 0 or (state.step % self.stride and state.step != self.n_steps):
            return
        snap = FieldSnapshot.from_state(model, state, self.eta_phys)
        path = write_snapshot(self.out_dir / f"snapshot_{state.step:06d}.vtk", model.mesh, snap)
        self.written.append(path)
        logger.debug("wrote %s", path)


DIAGNOSTIC_FIELDS = [f.name for f in dataclasses.fields(StepReport)] + ["total_energy"]


def write_diagnostics(path: Path, reports: Iterable[StepReport]) -> None:
    """Per-step scalar diagnostics, one CSV row per step."""
    rows = ({name: getattr(r, name) for name in DIAGNOSTIC_FIELDS} for r in reports)
    write_rows(path, DIAGNOSTIC_FIELDS, rows)


def csv_cell(value: object) -> object:
    """Floats as their shortest round-trip repr, numpy scalars included."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Dict[str, object]]) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(header), extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: csv_cell(v) for k, v in row.items()})
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc

