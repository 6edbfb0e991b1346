"""Shared fixtures and independent oracles used across the test suite."""

import itertools

import numpy as np
import pytest

from sgbayes.grid import Box


def brute_force_point_count(ndim: int, max_level: int) -> int:
    """Independent sparse-grid size oracle: enumerate every level vector with
    |i| <= K and sum the tensor-block sizes, with its own node-count rule."""

    def m(i):
        return 1 if i == 0 else (2 if i == 1 else 2 ** (i - 1))

    total = 0
    for levels in itertools.product(range(max_level + 1), repeat=ndim):
        if sum(levels) <= max_level:
            block = 1
            for i in levels:
                block *= m(i)
            total += block
    return total


def hierarchical_interp_1d(xs, values_fn, max_level):
    """Brute-force 1-D hierarchical interpolation oracle.

    Builds the interpolant level by level from first principles (explicit
    node lists, explicit hats) without using the package machinery, and
    evaluates it at ``xs``.  Returns (interpolant values, surplus dict).
    """

    def m(i):
        return 1 if i == 0 else (2 if i == 1 else 2 ** (i - 1))

    def node_x(i, j):
        if i == 0:
            return 0.5
        if i == 1:
            return 0.0 if j == 1 else 1.0
        return (2 * j - 1) / 2**i

    def hat(i, j, x):
        if i == 0:
            return 1.0
        half = 0.5 if i == 1 else 2.0**-i
        return max(0.0, 1.0 - abs(x - node_x(i, j)) / half)

    surpluses = {}
    for level in range(max_level + 1):
        for j in range(1, m(level) + 1):
            x = node_x(level, j)
            partial = sum(
                c * hat(i2, j2, x) for (i2, j2), c in surpluses.items() if i2 < level
            )
            surpluses[(level, j)] = values_fn(x) - partial
    out = np.array(
        [sum(c * hat(i, j, x) for (i, j), c in surpluses.items()) for x in xs]
    )
    return out, surpluses


def lattice(box: Box, n_per_dim: int) -> np.ndarray:
    """Uniform tensor lattice over a physical box, shape (n^d, d)."""
    axes = [np.linspace(a, b, n_per_dim) for a, b in zip(box.lower, box.upper)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
