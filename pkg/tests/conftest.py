from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from impactopt.constitutive import MaterialParams
from impactopt.forward import DynamicModel
from impactopt.interpolation import SolidVoidScheme, element_materials
from impactopt.loading import gaussian_top_load
from impactopt.mesh import build_structured_mesh

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

# Apply a default timeout to every test to catch runaway solver loops quickly.
TIMEOUT_MARK = pytest.mark.timeout(timeout=5, method="thread")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale tests")


def pytest_collection_modifyitems(config, items):
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if item.get_closest_marker("timeout") is None:
            item.add_marker(TIMEOUT_MARK)
        if "slow" in item.keywords and not config.getoption("--runslow"):
            item.add_marker(skip_slow)


@pytest.fixture
def scenario_path():
    def resolve(name: str) -> Path:
        return SCENARIOS / name

    return resolve


def beam_material(sigma_y0: float = 1e3, Gc: float = 1e3) -> MaterialParams:
    """Unit-stiffness material; the defaults never yield nor crack."""
    return MaterialParams.from_young(
        1.0,
        0.3,
        rho=1.0,
        sigma_y0=sigma_y0,
        eps_p0=0.1,
        n=3.0,
        eps_dot_p0=1.0,
        m=3.0,
        Gc=Gc,
        ell=0.1,
        d1=0.01,
        w1=0.95,
    )


@pytest.fixture
def beam():
    """Factory for a clamped 8x2 beam under a short top pulse."""

    def build(
        impulse: float = 1e-3,
        sigma_y0: float = 1e3,
        Gc: float = 1e3,
        eta=None,
        scheme=None,
    ) -> DynamicModel:
        mesh = build_structured_mesh(8, 2, 1.0, 0.25)
        base = beam_material(sigma_y0, Gc)
        eta = np.ones(len(mesh.design_elements)) if eta is None else np.asarray(eta, dtype=float)
        materials = element_materials(eta, scheme or SolidVoidScheme(), base, 3.0)
        load = gaussian_top_load(mesh, 1.0, impulse, 1.0, "box", std_fraction=0.1, width_fraction=0.4)
        return DynamicModel(mesh, base, materials, load)

    return build
