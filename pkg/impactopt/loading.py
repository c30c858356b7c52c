"""External loads: truncated-Gaussian edge tractions with a temporal pulse, body force."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError
from .mesh import Mesh2D, element_shape_integrals, scatter_nodal

logger = logging.getLogger(__name__)

PULSES = ("box", "half_sine")
_EDGE_GAUSS = np.polynomial.legendre.leggauss(6)


def gaussian_edge_weights(
    mesh: Mesh2D,
    nodes: np.ndarray,
    center: float,
    std: float,
    width: float,
) -> np.ndarray:
    """Consistent nodal weights of a truncated Gaussian along a horizontal edge.

    The profile ``exp(-(x - center)^2 / (2 std^2))`` is cut to ``|x - center| <= width/2``.
    Weights are returned per node of ``nodes`` and sum to one.
    """
    if std <= 0.0 or width <= 0.0:
        raise InvalidArgumentError("Gaussian load needs positive std and width")
    order = np.argsort(mesh.node_coords[nodes, 0])
    ids = np.asarray(nodes)[order]
    x = mesh.node_coords[ids, 0]
    pts, wts = _EDGE_GAUSS
    weights = np.zeros(len(ids))
    for i in range(len(ids) - 1):
        x0, x1 = x[i], x[i + 1]
        xs = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * pts
        profile = np.exp(-((xs - center) ** 2) / (2.0 * std**2))
        profile[np.abs(xs - center) > 0.5 * width] = 0.0
        jac = 0.5 * (x1 - x0) * wts
        n1 = 0.5 * (1.0 + pts)
        weights[i] += np.sum(jac * profile * (1.0 - n1))
        weights[i + 1] += np.sum(jac * profile * n1)
    total = weights.sum()
    if total <= 0.0:
        raise InvalidArgumentError("load window does not intersect the loaded edge")
    out = np.zeros(len(ids))
    out[order] = weights / total
    return out


@dataclass
class LoadProgram:
    """Edge traction pulse plus a constant body force.

    The traction resultant equals ``amplitude(t)`` and integrates to
    ``impulse`` over the pulse, acting along ``direction``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    impulse: float = 0.0
    duration: float = 1.0
    pulse: str = "box"
    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0]))
    body_force: Optional[np.ndarray] = None
    scale: float = 1.0
    _body_nodal: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.pulse not in PULSES:
            raise InvalidArgumentError(f"unknown pulse {self.pulse!r}; expected one of {PULSES}")
        if self.duration <= 0.0:
            raise InvalidArgumentError("pulse duration must be positive")
        self.direction = np.asarray(self.direction, dtype=float)

    def amplitude(self, t: float) -> float:
        if t < 0.0 or t >= self.duration or self.impulse == 0.0:
            return 0.0
        if self.pulse == "box":
            return self.scale * self.impulse / self.duration
        return self.scale * 0.5 * np.pi * self.impulse / self.duration * np.sin(np.pi * t / self.duration)

    def bind(self, mesh: Mesh2D, body_elements: Optional[np.ndarray] = None) -> "LoadProgram":
        """Precompute the nodal body-force vector over ``body_elements``."""
        body = np.zeros((mesh.n_nodes, 2))
        if self.body_force is not None and np.any(self.body_force):
            integrals = element_shape_integrals(mesh)
            if body_elements is not None:
                mask = np.zeros(mesh.n_elements, dtype=bool)
                mask[body_elements] = True
                integrals = integrals * mask[:, None]
            body = scatter_nodal(mesh, integrals[:, :, None] * np.asarray(self.body_force)[None, None, :])
        self._body_nodal = body
        return self

    def nodal_force(self, t: float, n_nodes: int) -> np.ndarray:
        out = np.zeros((n_nodes, 2)) if self._body_nodal is None else self._body_nodal.copy()
        amp = self.amplitude(t)
        if amp != 0.0:
            out[self.nodes] += amp * self.weights[:, None] * self.direction[None, :]
        return out

    @classmethod
    def none(cls) -> "LoadProgram":
        return cls(nodes=np.zeros(0, dtype=np.int64), weights=np.zeros(0))


def gaussian_top_load(
    mesh: Mesh2D,
    L: float,
    impulse: float,
    duration: float,
    pulse: str = "box",
    std_fraction: float = 1.0 / 20.0,
    width_fraction: float = 1.0 / 5.0,
    body_force: Optional[np.ndarray] = None,
) -> LoadProgram:
    """Downward pulse on the top face centred at ``L/2``."""
    nodes = mesh.boundary_sets["top"]
    weights = gaussian_edge_weights(mesh, nodes, 0.5 * L, std_fraction * L, width_fraction * L)
    keep = weights > 0.0
    logger.debug("Gaussian load on %d of %d top nodes", int(keep.sum()), len(nodes))
    load = LoadProgram(
        nodes=np.asarray(nodes)[keep],
        weights=weights[keep],
        impulse=impulse,
        duration=duration,
        pulse=pulse,
        body_force=body_force,
    )
    return load.bind(mesh, mesh.design_elements)
