"""Structured quadrilateral meshes and bilinear finite-element kernels.

Gauss-point arrays are flattened element-major: point ``k`` of element ``e``
lives at index ``4 * e + k``. Nodal vector fields have shape ``(n_nodes, 2)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DESIGN = 0
CONTACT = 1
FLYER = 2
BLOCK_NAMES = {DESIGN: "design", CONTACT: "contact", FLYER: "flyer"}

_G = 1.0 / np.sqrt(3.0)
_REF_NODES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_REF_GAUSS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])


def _shape(xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Bilinear shape values ``(npts, 4)`` and reference gradients ``(npts, 4, 2)``."""
    xi = np.atleast_2d(xi)
    s, t = xi[:, 0:1], xi[:, 1:2]
    sa, ta = _REF_NODES[:, 0], _REF_NODES[:, 1]
    values = 0.25 * (1.0 + s * sa) * (1.0 + t * ta)
    grads = np.stack([0.25 * sa * (1.0 + t * ta), 0.25 * ta * (1.0 + s * sa)], axis=-1)
    return values, grads


@dataclass
class Mesh2D:
    """Quadrilateral mesh with precomputed 2x2 Gauss quadrature."""

    node_coords: np.ndarray
    elements: np.ndarray
    element_block: np.ndarray
    boundary_sets: Dict[str, np.ndarray]
    gauss_points: np.ndarray = field(repr=False)
    gauss_weights: np.ndarray = field(repr=False)
    shape_values: np.ndarray = field(repr=False)
    shape_gradients: np.ndarray = field(repr=False)
    grid: Optional[Tuple[int, int, float, float]] = None

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_gauss(self) -> int:
        return 4 * self.n_elements

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights flattened to ``(n_gauss,)``."""
        return self.gauss_weights.reshape(-1)

    def block_elements(self, block: int) -> np.ndarray:
        return np.flatnonzero(self.element_block == block)

    @property
    def design_elements(self) -> np.ndarray:
        return self.block_elements(DESIGN)

    def element_areas(self) -> np.ndarray:
        return self.gauss_weights.sum(axis=1)

    def element_centroids(self) -> np.ndarray:
        return self.node_coords[self.elements].mean(axis=1)

    def min_element_size(self, elements: Optional[np.ndarray] = None) -> np.ndarray:
        """Shortest edge of each element (all elements by default)."""
        conn = self.elements if elements is None else self.elements[elements]
        xy = self.node_coords[conn]
        edges = np.linalg.norm(np.roll(xy, -1, axis=1) - xy, axis=2)
        return edges.min(axis=1)

    def dirichlet_dofs(self, names: Sequence[str]) -> np.ndarray:
        """Boolean mask ``(n_nodes,)`` of nodes clamped by the named sets."""
        mask = np.zeros(self.n_nodes, dtype=bool)
        for name in names:
            mask[self.boundary_sets[name]] = True
        return mask


def _finalize(
    coords: np.ndarray,
    elements: np.ndarray,
    blocks: np.ndarray,
    sets: Dict[str, np.ndarray],
    grid: Optional[Tuple[int, int, float, float]] = None,
) -> Mesh2D:
    values, ref_grads = _shape(_REF_GAUSS)
    xy = coords[elements]  # (ne, 4, 2)
    # J[e, k, i, j] = sum_a x_a[i] dN_a/dxi_j at gauss point k
    jac = np.einsum("eai,kaj->ekij", xy, ref_grads)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(det <= 0.0):
        bad = np.unique(np.nonzero(det <= 0.0)[0])
        raise InvalidArgumentError(f"non-positive Jacobian in elements {bad[:10].tolist()}")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    grads = np.einsum("kaj,ekji->ekai", ref_grads, inv)
    gauss_xy = np.einsum("ka,eai->eki", values, xy)
    return Mesh2D(
        node_coords=coords,
        elements=elements,
        element_block=blocks,
        boundary_sets=sets,
        gauss_points=gauss_xy,
        gauss_weights=det,  # reference weights are all one for 2x2 Gauss
        shape_values=values,
        shape_gradients=grads,
        grid=grid,
    )


def _grid_nodes(nx: int, ny: int, x0: float, y0: float, hx: float, hy: float) -> np.ndarray:
    xs = x0 + hx * np.arange(nx + 1)
    ys = y0 + hy * np.arange(ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def _grid_elements(nx: int, ny: int, node_id: np.ndarray) -> np.ndarray:
    """Counter-clockwise connectivity from a ``(ny+1, nx+1)`` node-id table."""
    n0 = node_id[:-1, :-1].ravel()
    n1 = node_id[:-1, 1:].ravel()
    n2 = node_id[1:, 1:].ravel()
    n3 = node_id[1:, :-1].ravel()
    return np.column_stack([n0, n1, n2, n3])


def build_structured_mesh(nx: int, ny: int, L: float, H: float) -> Mesh2D:
    """Rectangle ``[0, L] x [0, H]`` split into ``nx * ny`` equal quads."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgumentError(f"element counts must be positive integers, got ({nx}, {ny})")
    if not (L > 0.0 and H > 0.0):
        raise InvalidArgumentError(f"domain size must be positive, got L={L}, H={H}")
    nx, ny = int(nx), int(ny)
    coords = _grid_nodes(nx, ny, 0.0, 0.0, L / nx, H / ny)
    node_id = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    elements = _grid_elements(nx, ny, node_id)
    sets = {
        "bottom": node_id[0, :].copy(),
        "top": node_id[-1, :].copy(),
        "left": node_id[:, 0].copy(),
        "right": node_id[:, -1].copy(),
    }
    blocks = np.full(nx * ny, DESIGN, dtype=np.int8)
    mesh = _finalize(coords, elements, blocks, sets, grid=(nx, ny, float(L), float(H)))
    logger.debug("structured mesh %dx%d: %d nodes", nx, ny, mesh.n_nodes)
    return mesh


def build_impact_mesh(
    nx: int,
    ny: int,
    L: float,
    H: float,
    flyer_nx: int,
    flyer_ny: int,
    flyer_length: float,
    flyer_height: float,
    contact_thickness: float,
) -> Mesh2D:
    """Domain, one row of contact elements and a flyer stacked on the top face.

    The flyer is centred on ``x = L/2`` and must share node columns with the
    domain, i.e. ``flyer_length / flyer_nx == L / nx`` and its edges must land
    on domain nodes.
    """
    base = build_structured_mesh(nx, ny, L, H)
    if flyer_nx < 1 or flyer_ny < 1 or flyer_length <= 0.0 or flyer_height <= 0.0:
        raise InvalidArgumentError("flyer dimensions must be positive")
    if contact_thickness <= 0.0:
        raise InvalidArgumentError("contact layer thickness must be positive")
    hx = L / nx
    if not np.isclose(flyer_length / flyer_nx, hx, rtol=1e-9):
        raise InvalidArgumentError(
            f"flyer element width {flyer_length / flyer_nx:g} differs from domain width {hx:g}"
        )
    start = (L - flyer_length) / 2.0 / hx
    i0 = int(round(start))
    if not np.isclose(start, i0, atol=1e-9) or i0 < 0 or i0 + flyer_nx > nx:
        raise InvalidArgumentError("flyer edges do not coincide with domain node columns")

    base_ids = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    cols = flyer_nx + 1
    rows_above = 1 + flyer_ny  # contact top row plus the flyer rows
    new_ids = base.n_nodes + np.arange(rows_above * cols).reshape(rows_above, cols)
    x_cols = base.node_coords[base_ids[-1, i0 : i0 + cols], 0]
    y_rows = H + contact_thickness + (flyer_height / flyer_ny) * np.arange(flyer_ny + 1)
    gx, gy = np.meshgrid(x_cols, y_rows)
    coords = np.vstack([base.node_coords, np.column_stack([gx.ravel(), gy.ravel()])])

    stack = np.vstack([base_ids[-1:, i0 : i0 + cols], new_ids])
    contact = _grid_elements(flyer_nx, 1, stack[:2])
    flyer = _grid_elements(flyer_nx, flyer_ny, stack[1:])
    elements = np.vstack([base.elements, contact, flyer])
    blocks = np.concatenate(
        [
            base.element_block,
            np.full(len(contact), CONTACT, dtype=np.int8),
            np.full(len(flyer), FLYER, dtype=np.int8),
        ]
    )
    sets = dict(base.boundary_sets)
    sets["impact_face"] = base_ids[-1, i0 : i0 + cols].copy()
    sets["flyer"] = np.unique(stack[1:]).copy()
    sets["contact_band"] = np.unique(stack[:2]).copy()
    return _finalize(coords, elements, blocks, sets)


def gradient_at_gauss(mesh: Mesh2D, nodal_field: np.ndarray) -> np.ndarray:
    """Gradient of a nodal field at every Gauss point.

    Scalar fields ``(n_nodes,)`` give ``(n_gauss, 2)``; vector fields
    ``(n_nodes, 2)`` give ``(n_gauss, 2, 2)`` with ``G[g, i, j] = d u_i / d x_j``.
    """
    nodal_field = np.asarray(nodal_field, dtype=float)
    if nodal_field.shape[0] != mesh.n_nodes or nodal_field.ndim not in (1, 2):
        raise InvalidArgumentError(
            f"nodal field of shape {nodal_field.shape} does not match {mesh.n_nodes} nodes"
        )
    local = nodal_field[mesh.elements]
    if nodal_field.ndim == 1:
        return np.einsum("ea,ekaj->ekj", local, mesh.shape_gradients).reshape(-1, 2)
    return np.einsum("eai,ekaj->ekij", local, mesh.shape_gradients).reshape(-1, 2, 2)


def strain_at_gauss(mesh: Mesh2D, u: np.ndarray) -> np.ndarray:
    """Small-strain tensor ``sym(grad u)`` at every Gauss point."""
    g = gradient_at_gauss(mesh, u)
    return 0.5 * (g + np.swapaxes(g, 1, 2))


def scatter_nodal(mesh: Mesh2D, contrib: np.ndarray) -> np.ndarray:
    """Sum element-local nodal contributions ``(ne, 4[, 2])`` into a global array."""
    idx = mesh.elements.ravel()
    if contrib.ndim == 2:
        return np.bincount(idx, weights=contrib.ravel(), minlength=mesh.n_nodes)
    out = np.empty((mesh.n_nodes, contrib.shape[2]))
    for c in range(contrib.shape[2]):
        out[:, c] = np.bincount(idx, weights=contrib[:, :, c].ravel(), minlength=mesh.n_nodes)
    return out


def divergence_of_stress(mesh: Mesh2D, stress: np.ndarray, start: int = 0, stop: int = -1) -> np.ndarray:
    """Element-local nodal forces ``sum_k w_k sigma_k grad N_a`` for elements ``[start, stop)``.

    ``stress`` is ``(n_gauss, 2, 2)``; the result is ``(stop - start, 4, 2)``.
    """
    if stop < 0:
        stop = mesh.n_elements
    sig = stress[4 * start : 4 * stop].reshape(stop - start, 4, 2, 2)
    w = mesh.gauss_weights[start:stop]
    return np.einsum("ek,ekij,ekaj->eai", w, sig, mesh.shape_gradients[start:stop])


def internal_force(mesh: Mesh2D, stress: np.ndarray) -> np.ndarray:
    """Assembled internal force vector ``(n_nodes, 2)``."""
    return scatter_nodal(mesh, divergence_of_stress(mesh, stress))


def element_shape_integrals(mesh: Mesh2D) -> np.ndarray:
    """``int_e N_a dOmega`` for every element, shape ``(ne, 4)``."""
    return np.einsum("ek,ka->ea", mesh.gauss_weights, mesh.shape_values)


def lumped_mass(mesh: Mesh2D, density_field: np.ndarray) -> np.ndarray:
    """Row-sum lumped mass matrix diagonal ``(n_nodes,)`` for per-element density."""
    density_field = np.asarray(density_field, dtype=float)
    if density_field.shape != (mesh.n_elements,):
        raise InvalidArgumentError(
            f"density has shape {density_field.shape}, expected ({mesh.n_elements},)"
        )
    if np.any(~(density_field > 0.0)):
        raise InvalidArgumentError("mass density must be strictly positive on every element")
    return scatter_nodal(mesh, density_field[:, None] * element_shape_integrals(mesh))


def _assemble_scalar(
    mesh: Mesh2D, elements: np.ndarray, local: np.ndarray, node_map: np.ndarray, n: int
) -> sp.csr_matrix:
    conn = node_map[mesh.elements[elements]]
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def element_mass_matrices(mesh: Mesh2D, elements: np.ndarray) -> np.ndarray:
    w = mesh.gauss_weights[elements]
    return np.einsum("ek,ka,kb->eab", w, mesh.shape_values, mesh.shape_values)


def element_laplacians(mesh: Mesh2D, elements: np.ndarray) -> np.ndarray:
    w = mesh.gauss_weights[elements]
    g = mesh.shape_gradients[elements]
    return np.einsum("ek,ekai,ekbi->eab", w, g, g)


def h1_gram(mesh: Mesh2D, elements: np.ndarray) -> sp.csr_matrix:
    """Gram matrix of the H1 inner product for vector fields, on ``2 * n_nodes`` dofs.

    Dofs are interleaved: node ``i`` carries ``2i`` (x) and ``2i + 1`` (y).
    """
    local = element_mass_matrices(mesh, elements) + element_laplacians(mesh, elements)
    scalar = _assemble_scalar(mesh, elements, local, np.arange(mesh.n_nodes), mesh.n_nodes)
    return sp.kron(scalar, sp.identity(2), format="csr")


class ScalarSpace:
    """Bilinear scalar field on a subset of elements, with Gauss-point coupling.

    Provides the interpolation matrix ``N`` (Gauss points of the subset to
    local nodes), quadrature weights ``W``, the consistent mass ``S = N^T W N``
    and the projection ``P = N^T W``.
    """

    def __init__(self, mesh: Mesh2D, elements: np.ndarray, dirichlet_nodes: np.ndarray) -> None:
        self.mesh = mesh
        self.elements = np.asarray(elements)
        nodes = np.unique(mesh.elements[self.elements])
        self.nodes = nodes
        self.node_map = np.full(mesh.n_nodes, -1, dtype=np.int64)
        self.node_map[nodes] = np.arange(len(nodes))
        self.size = len(nodes)
        self.gauss_index = (4 * self.elements[:, None] + np.arange(4)).ravel()
        self.weights = mesh.gauss_weights[self.elements].ravel()
        local = self.node_map[mesh.elements[self.elements]]  # (ne_s, 4)
        rows = np.repeat(np.arange(4 * len(self.elements)), 4)
        cols = np.repeat(local, 4, axis=0).ravel()
        vals = np.tile(mesh.shape_values, (len(self.elements), 1)).ravel()
        self.N = sp.csr_matrix((vals, (rows, cols)), shape=(4 * len(self.elements), self.size))
        self.P = (self.N.T @ sp.diags(self.weights)).tocsr()
        self.S = (self.P @ self.N).tocsr()
        self.element_laplacians = element_laplacians(mesh, self.elements)
        fixed = np.zeros(self.size, dtype=bool)
        on_subset = self.node_map[dirichlet_nodes]
        fixed[on_subset[on_subset >= 0]] = True
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)

    @property
    def n_gauss(self) -> int:
        return len(self.weights)

    def laplacian(self, coefficient: np.ndarray) -> sp.csr_matrix:
        """``int c grad N_p . grad N_q`` with per-element coefficient ``c``."""
        local = coefficient[:, None, None] * self.element_laplacians
        return _assemble_scalar(self.mesh, self.elements, local, self.node_map, self.size)

    def at_gauss(self, nodal: np.ndarray) -> np.ndarray:
        """Interpolate a nodal damage vector to the design Gauss points."""
        return self.N @ nodal

    def local_conn(self) -> np.ndarray:
        return self.node_map[self.mesh.elements[self.elements]]


def interpolate_at_points(mesh: Mesh2D, nodal_field: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a nodal field at arbitrary points of a structured mesh."""
    if mesh.grid is None:
        raise InvalidArgumentError("point interpolation needs a single-block structured mesh")
    nx, ny, L, H = mesh.grid
    points = np.atleast_2d(points)
    fx = np.clip(points[:, 0] / (L / nx), 0.0, nx)
    fy = np.clip(points[:, 1] / (H / ny), 0.0, ny)
    i = np.minimum(fx.astype(int), nx - 1)
    j = np.minimum(fy.astype(int), ny - 1)
    s, t = fx - i, fy - j
    ids = np.arange(mesh.n_nodes).reshape(ny + 1, nx + 1)
    f = np.asarray(nodal_field)
    c00, c10 = f[ids[j, i]], f[ids[j, i + 1]]
    c01, c11 = f[ids[j + 1, i]], f[ids[j + 1, i + 1]]
    if f.ndim == 2:
        s, t = s[:, None], t[:, None]
    return (1 - s) * (1 - t) * c00 + s * (1 - t) * c10 + (1 - s) * t * c01 + s * t * c11
