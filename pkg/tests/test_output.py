from __future__ import annotations

import csv
import math

import meshio
import numpy as np
import pytest

from impactopt.errors import InvalidArgumentError
from impactopt.forward import run_forward
from impactopt.output import (
    CELL_FIELDS,
    DIAGNOSTIC_FIELDS,
    FieldSnapshot,
    SnapshotWriter,
    read_cell_field,
    write_diagnostics,
    write_rows,
    write_snapshot,
)


def test_snapshot_of_the_initial_state_is_zero(beam, tmp_path) -> None:
    model = beam()
    eta = np.linspace(0.2, 0.9, 16)

    snap = FieldSnapshot.from_state(model, model.initial_state(), eta)
    path = write_snapshot(tmp_path / "s.vtk", model.mesh, snap)

    assert not np.any(snap.displacement)
    assert not np.any(snap.damage)
    assert not np.any(snap.plastic_strain)
    np.testing.assert_array_equal(read_cell_field(path, "eta"), eta)
    np.testing.assert_array_equal(read_cell_field(path, "hardening"), np.zeros(16))
    text = path.read_bytes()
    assert text.startswith(b"# vtk DataFile Version")
    assert b"\nASCII\n" in text
    back = meshio.read(path)
    assert back.points.shape == (model.mesh.n_nodes, 3)
    np.testing.assert_array_equal(back.points[:, :2], model.mesh.node_coords)
    np.testing.assert_array_equal(back.cells_dict["quad"], model.mesh.elements)
    np.testing.assert_array_equal(back.point_data["displacement"], 0.0)
    assert set(back.cell_data) == set(CELL_FIELDS)


def test_design_field_survives_bit_exactly(beam, tmp_path) -> None:
    model = beam()
    rng = np.random.default_rng(3)
    eta = rng.uniform(0.01, 1.0, 16)

    snap = FieldSnapshot.from_state(model, model.initial_state(), eta)
    path = write_snapshot(tmp_path / "s.vtk", model.mesh, snap)

    assert read_cell_field(path, "eta").tobytes() == eta.tobytes()


def test_mismatched_snapshot_is_rejected(beam, tmp_path) -> None:
    model = beam()
    snap = FieldSnapshot.from_state(model, model.initial_state(), np.ones(16))
    path = write_snapshot(tmp_path / "ok.vtk", model.mesh, snap)
    snap.eta = np.ones(3)

    with pytest.raises(InvalidArgumentError):
        write_snapshot(tmp_path / "s.vtk", model.mesh, snap)
    with pytest.raises(InvalidArgumentError, match="no cell field"):
        read_cell_field(path, "pressure")


@pytest.mark.parametrize("n_steps,stride", [(10, 4), (12, 4), (7, 10)])
def test_writer_cadence(beam, tmp_path, n_steps, stride) -> None:
    model = beam(impulse=1e-2)
    writer = SnapshotWriter(tmp_path / "snaps", np.ones(16), n_steps, stride)

    run_forward(model, 0.02, n_steps, observer=lambda state: writer(model, state))

    steps = [int(p.stem.split("_")[1]) for p in writer.written]
    assert len(steps) == math.ceil(n_steps / stride)
    assert steps[-1] == n_steps
    assert all(s % stride == 0 for s in steps[:-1])
    assert sorted(p.name for p in (tmp_path / "snaps").iterdir()) == [p.name for p in writer.written]


def test_writer_does_not_change_the_trajectory(beam, tmp_path) -> None:
    model = beam(impulse=1e-2)
    plain = run_forward(model, 0.02, 10).final_state
    writer = SnapshotWriter(tmp_path, np.ones(16), 10, 3)

    watched = run_forward(model, 0.02, 10, observer=lambda state: writer(model, state)).final_state

    np.testing.assert_array_equal(watched.u, plain.u)


def test_stride_must_be_positive(tmp_path) -> None:
    with pytest.raises(InvalidArgumentError):
        SnapshotWriter(tmp_path, np.ones(4), 10, 0)


def test_diagnostics_csv(beam, tmp_path) -> None:
    model = beam(impulse=1e-2)
    result = run_forward(model, 0.02, 5)

    write_diagnostics(tmp_path / "diagnostics.csv", result.reports)

    with (tmp_path / "diagnostics.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == DIAGNOSTIC_FIELDS
    assert "total_energy" in DIAGNOSTIC_FIELDS
    assert len(rows) == len(result.reports)
    last = result.reports[-1]
    assert float(rows[-1]["total_energy"]) == last.total_energy
    assert int(rows[-1]["step"]) == last.step


def test_write_rows_ignores_extra_keys(tmp_path) -> None:
    write_rows(tmp_path / "t.csv", ["a", "b"], [{"a": 0.1, "b": 2, "c": "x"}])

    assert (tmp_path / "t.csv").read_text().splitlines() == ["a,b", "0.1,2"]
