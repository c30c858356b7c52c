from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from impactopt.errors import InvalidArgumentError
from impactopt.sparse import PenaltyFactorCache, SparseOperator, restrict


def _laplacian_1d(n: int) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


def test_operator_factorizes_once_and_solves() -> None:
    A = _laplacian_1d(6) + sp.identity(6)
    op = SparseOperator(A, tag="a")
    rhs = np.arange(6, dtype=float)

    assert not op.factorized
    x = op.solve(rhs)
    assert op.factorized
    assert op.factor_tag == "a"
    np.testing.assert_allclose(A @ x, rhs, atol=1e-13)
    assert op.asymmetry() == 0.0


def test_operator_rejects_rectangular_matrices() -> None:
    with pytest.raises(InvalidArgumentError):
        SparseOperator(sp.csr_matrix(np.ones((2, 3))))


def test_asymmetry_is_relative() -> None:
    op = SparseOperator(sp.csr_matrix(np.array([[2.0, 1.0], [0.5, 2.0]])))

    assert op.asymmetry() == pytest.approx(0.25)


def test_restrict_selects_the_free_block() -> None:
    A = sp.csr_matrix(np.arange(16, dtype=float).reshape(4, 4))

    block = restrict(A, np.array([1, 3]))

    np.testing.assert_array_equal(block.toarray(), [[5.0, 7.0], [13.0, 15.0]])


def test_penalty_cache_reuses_factorizations() -> None:
    n = 8
    stiffness = _laplacian_1d(n)
    mass = sp.identity(n, format="csr") / n
    free = np.arange(1, n - 1)
    cache = PenaltyFactorCache(stiffness, mass, free)

    first = cache.operator(0.5)
    assert cache.operator(0.5) is first
    cache.operator(2.0)
    cache.operator(0.5)

    assert cache.penalties == [0.5, 2.0]
    assert cache.n_factorizations == 2
    rhs = np.ones(len(free))
    np.testing.assert_allclose(cache.mass().solve(rhs), n * rhs, rtol=1e-13)
    assert cache.n_factorizations == 3
    expected = (restrict(stiffness, free) + 2.0 * restrict(mass, free)) @ cache.operator(2.0).solve(rhs)
    np.testing.assert_allclose(expected, rhs, atol=1e-12)
