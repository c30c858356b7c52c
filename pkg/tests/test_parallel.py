from __future__ import annotations

import threading

import numpy as np
import pytest

from impactopt.errors import InvalidArgumentError
from impactopt.parallel import ChunkedExecutor, default_threads


def test_single_thread_runs_inline() -> None:
    seen = []

    with ChunkedExecutor(1) as executor:
        out = executor.map(lambda a, b: seen.append(threading.get_ident()) or (a, b), 10_000)

    assert out == [(0, 10_000)]
    assert seen == [threading.get_ident()]


def test_chunks_cover_the_range_in_order() -> None:
    with ChunkedExecutor(4, min_chunk=10) as executor:
        ranges = executor.map(lambda a, b: (a, b), 103)

    assert len(ranges) == 4
    assert ranges[0][0] == 0
    assert ranges[-1][1] == 103
    assert all(prev[1] == nxt[0] for prev, nxt in zip(ranges, ranges[1:]))


def test_small_workloads_are_not_split() -> None:
    with ChunkedExecutor(8, min_chunk=256) as executor:
        assert executor.map(lambda a, b: b - a, 300) == [300]


def test_threaded_reduction_matches_serial() -> None:
    values = np.random.default_rng(0).standard_normal(5000)

    with ChunkedExecutor(3, min_chunk=100) as executor:
        parts = executor.map(lambda a, b: values[a:b] ** 2, len(values))

    np.testing.assert_array_equal(np.concatenate(parts), values**2)


def test_invalid_thread_count() -> None:
    with pytest.raises(InvalidArgumentError):
        ChunkedExecutor(0)
    assert default_threads() >= 1
