"""One-dimensional hierarchical node sets, hat bases, and multi-index topology.

Levels are numbered from zero.  Level ``i`` carries ``m(i)`` nodes with
``m(0) = 1``, ``m(1) = 2`` and ``m(i) = 2**(i-1)`` for ``i >= 2``; the union
of levels ``0..K`` is the uniform dyadic grid on [0, 1] with ``2**K + 1``
points for ``K >= 1`` (a single midpoint for ``K = 0``).  Every node
coordinate is a dyadic rational, hence exact in double precision, and node
identity is always the integer pair ``(level, position)`` -- coordinates are
never compared as floats.

The level-``i`` hat functions have half-width equal to the dyadic spacing
``2**-i`` (``i >= 2``), so hats on a common level have disjoint interiors and
each hat vanishes at every node of its own or any coarser level.  Level-1
nodes sit on the boundary and carry one-sided hats supported on [0, 0.5] and
[0.5, 1]; the level-0 basis is the constant 1, which makes the level-0
interpolant the constant midpoint value.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError


def node_count(level: int) -> int:
    """Number of nodes m(i) introduced by hierarchical level ``i``."""
    if level < 0:
        raise ValueError(f"level must be non-negative, got {level}")
    if level == 0:
        return 1
    if level == 1:
        return 2
    return 2 ** (level - 1)


def node_coordinate(level: int, position: int) -> float:
    """Unit-interval abscissa of node ``(level, position)``.

    Level 0 is the midpoint, level 1 the two endpoints, and for ``i >= 2``
    position ``j`` maps to ``(2j - 1) / 2**i`` (odd multiples of the level
    spacing).  All results are exact dyadic rationals.
    """
    if level == 0:
        return 0.5
    if level == 1:
        return 0.0 if position == 1 else 1.0
    return (2 * position - 1) / float(2**level)


def support_halfwidth(level: int) -> float:
    """Half-width of the level-``i`` hat support (inf encodes the constant root)."""
    if level == 0:
        return float("inf")
    if level == 1:
        return 0.5
    return 2.0 ** (-level)


def is_valid_node(level: int, position: int) -> bool:
    return level >= 0 and 1 <= position <= node_count(level)


@dataclass(frozen=True)
class Node1D:
    """A one-dimensional hierarchical node identified by integers (level, position)."""

    level: int
    position: int

    @property
    def x(self) -> float:
        return node_coordinate(self.level, self.position)

    def children(self) -> tuple["Node1D", "Node1D"]:
        """Raw child pair (level+1, 2j-1) and (level+1, 2j).

        Applied to the level-1 endpoint node ``(1, 2)`` the formula yields
        out-of-range positions; callers that grow grids must filter with
        :func:`is_valid_node` and deduplicate against existing nodes.
        """
        return (
            Node1D(self.level + 1, 2 * self.position - 1),
            Node1D(self.level + 1, 2 * self.position),
        )


def nodes_of_level(level: int) -> list[Node1D]:
    """All m(i) nodes of hierarchical level ``i``, ascending in position."""
    return [Node1D(level, j) for j in range(1, node_count(level) + 1)]


def basis_eval(level: int, position: int, x: float) -> float:
    """Piecewise-linear hierarchical hat of node (level, position) at ``x``.

    Value 1 at the owning node, 0 at every other node of the same or any
    coarser level.  ``x`` must lie in [0, 1].
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"basis argument {x} outside [0, 1]")
    if level == 0:
        return 1.0
    t = 1.0 - abs(x - node_coordinate(level, position)) / support_halfwidth(level)
    return t if t > 0.0 else 0.0


@dataclass(frozen=True)
class MultiIndex:
    """A sparse-grid point identified per dimension by (level, position) integers."""

    levels: tuple[int, ...]
    positions: tuple[int, ...]

    def __post_init__(self):
        if len(self.levels) != len(self.positions):
            raise ValueError("levels and positions must have equal length")

    @property
    def ndim(self) -> int:
        return len(self.levels)

    @property
    def level(self) -> int:
        """Hierarchical level of the point: the sum of per-dimension levels."""
        return sum(self.levels)

    @property
    def is_valid(self) -> bool:
        """Whether each position index lies in the admissible range of its level."""
        return all(is_valid_node(i, j) for i, j in zip(self.levels, self.positions))

    def unit_coords(self) -> np.ndarray:
        return np.array(
            [node_coordinate(i, j) for i, j in zip(self.levels, self.positions)]
        )

    def children(self, dim: int) -> tuple["MultiIndex", "MultiIndex"]:
        """Raw child pair along ``dim``: level+1 with positions (2j-1, 2j).

        Candidates produced from level-1 boundary nodes may carry an
        out-of-range position; callers filter on :attr:`is_valid` and
        deduplicate (coordinate collisions are exact by nestedness).
        """
        if not 0 <= dim < self.ndim:
            raise ValueError(f"dimension index {dim} out of range")
        lv = list(self.levels)
        lv[dim] += 1
        j = self.positions[dim]
        first = list(self.positions)
        second = list(self.positions)
        first[dim] = 2 * j - 1
        second[dim] = 2 * j
        return (
            MultiIndex(tuple(lv), tuple(first)),
            MultiIndex(tuple(lv), tuple(second)),
        )

    def all_children(self):
        """Iterate the 2*ndim raw child candidates over all dimensions."""
        for dim in range(self.ndim):
            yield from self.children(dim)

    def __str__(self):
        return f"i={','.join(map(str, self.levels))};j={','.join(map(str, self.positions))}"


@dataclass(frozen=True)
class Box:
    """Axis-aligned product domain with finite per-dimension bounds."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(a) for a in self.lower))
        object.__setattr__(self, "upper", tuple(float(b) for b in self.upper))
        if len(self.lower) != len(self.upper):
            raise ConfigurationError("box bounds must have equal length")
        if not self.lower:
            raise ConfigurationError("box must have at least one dimension")
        for a, b in zip(self.lower, self.upper):
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ConfigurationError(f"box bounds must be finite, got [{a}, {b}]")
            if a >= b:
                raise ConfigurationError(f"degenerate box interval [{a}, {b}]")

    @classmethod
    def unit(cls, ndim: int) -> "Box":
        return cls((0.0,) * ndim, (1.0,) * ndim)

    @property
    def ndim(self) -> int:
        return len(self.lower)

    @property
    def lower_array(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def upper_array(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def ranges(self) -> np.ndarray:
        return self.upper_array - self.lower_array

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower_array + self.upper_array)

    def contains(self, theta) -> bool:
        t = np.asarray(theta, dtype=float)
        return bool(np.all(t >= self.lower_array) and np.all(t <= self.upper_array))

    def to_unit(self, theta) -> np.ndarray:
        """Affine map onto [0, 1]^ndim (no clipping; callers validate membership)."""
        t = np.asarray(theta, dtype=float)
        return (t - self.lower_array) / self.ranges

    def from_unit(self, x) -> np.ndarray:
        u = np.asarray(x, dtype=float)
        return self.lower_array + u * self.ranges


def point_coordinates(point: MultiIndex, box: Box) -> np.ndarray:
    """Physical coordinates of a grid point: affine image of its unit abscissas."""
    if point.ndim != box.ndim:
        raise ConfigurationError(
            f"point dimension {point.ndim} does not match box dimension {box.ndim}"
        )
    return box.from_unit(point.unit_coords())


def unit_lattice(ndim: int, n_per_dim: int) -> np.ndarray:
    """Uniform tensor lattice on [0, 1]^ndim with n_per_dim points per axis."""
    axes = [np.linspace(0.0, 1.0, n_per_dim)] * ndim
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def level_compositions(ndim: int, total: int):
    """All level vectors i with |i| == total, in lexicographic order."""
    if ndim == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in level_compositions(ndim - 1, total - head):
            yield (head,) + tail


def points_of_level_vector(levels: tuple[int, ...]):
    """All grid points of the incremental tensor block with level vector ``levels``."""
    ranges = [range(1, node_count(i) + 1) for i in levels]
    for positions in itertools.product(*ranges):
        yield MultiIndex(levels, positions)
