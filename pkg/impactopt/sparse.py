"""Sparse operators with cached LU factorizations."""

from __future__ import annotations

import logging
from typing import Dict, Hashable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)


class SparseOperator:
    """Square sparse matrix that factorizes once and then serves many solves.

    ``tag`` records which parameter value (for example a penalty ``r``) the
    matrix was assembled with; ``factorize`` keeps it next to the LU handle.
    """

    def __init__(self, matrix: sp.spmatrix, tag: Hashable = None) -> None:
        if matrix.shape[0] != matrix.shape[1]:
            raise InvalidArgumentError(f"operator must be square, got {matrix.shape}")
        self.matrix = sp.csc_matrix(matrix)
        self.tag = tag
        self._lu = None
        self._factor_tag: Hashable = None

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    @property
    def factorized(self) -> bool:
        return self._lu is not None

    @property
    def factor_tag(self) -> Hashable:
        return self._factor_tag

    def factorize(self) -> "SparseOperator":
        self._lu = splu(self.matrix)
        self._factor_tag = self.tag
        return self

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is None:
            self.factorize()
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def __matmul__(self, other: np.ndarray) -> np.ndarray:
        return self.matrix @ other

    def asymmetry(self) -> float:
        """``max|A - A^T| / max|A|``; zero for an exactly symmetric matrix."""
        scale = abs(self.matrix).max()
        if scale == 0.0:
            return 0.0
        diff = self.matrix - self.matrix.T
        return float(abs(diff).max() / scale) if diff.nnz else 0.0


def restrict(matrix: sp.spmatrix, rows: np.ndarray, cols: Optional[np.ndarray] = None) -> sp.csc_matrix:
    cols = rows if cols is None else cols
    return sp.csr_matrix(matrix)[rows][:, cols].tocsc()


class PenaltyFactorCache:
    """Factorizations of ``(K + r S)`` on the free dofs, one per distinct ``r``.

    The penalty only takes values ``r0 * gamma**k`` clamped to ``[r_min, r_max]``,
    so the cache stays small.
    """

    def __init__(self, stiffness: sp.spmatrix, mass: sp.spmatrix, free: np.ndarray) -> None:
        self.free = np.asarray(free)
        self._stiffness = restrict(stiffness, self.free)
        self._mass = restrict(mass, self.free)
        self._operators: Dict[float, SparseOperator] = {}
        self._mass_op = SparseOperator(self._mass, tag="mass")

    @property
    def n_factorizations(self) -> int:
        return len(self._operators) + int(self._mass_op.factorized)

    @property
    def stiffness(self) -> sp.csc_matrix:
        """The free-free block of ``K``."""
        return self._stiffness

    @property
    def penalties(self) -> list:
        return sorted(self._operators)

    def operator(self, r: float) -> SparseOperator:
        op = self._operators.get(r)
        if op is None:
            op = SparseOperator(self._stiffness + r * self._mass, tag=r).factorize()
            self._operators[r] = op
            logger.debug("factorized K + r S for r=%g (%d cached)", r, len(self._operators))
        return op

    def mass(self) -> SparseOperator:
        """The free-free block of ``S``, factorized on first use."""
        return self._mass_op
