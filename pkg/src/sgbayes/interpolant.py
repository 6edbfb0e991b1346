"""Sparse grids, hierarchical surpluses, and surplus-guided local refinement.

A sparse grid of level K collects every tensor block whose level vector sums
to at most K.  Values recorded at grid points are converted level by level
into hierarchical surpluses: the surplus of a point equals its value minus
the evaluation of the interpolant assembled from all strictly coarser
levels.  Because hats on a common level have disjoint interiors and vanish
at coarser nodes, evaluating the finished interpolant at any stored point
reproduces the recorded value to rounding.

Refinement inspects the deepest level only: every point whose (optionally
output-normalised) surplus magnitude exceeds the tolerance contributes its
two children per dimension to the next level.  Children are kept only when
their position indices are admissible and they are not already present, so
any adaptively grown grid is a sub-grid of the isotropic grid of equal
level.
"""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigurationError, DomainError, IncompleteDataError
from .grid import (
    Box,
    MultiIndex,
    level_compositions,
    node_coordinate,
    points_of_level_vector,
    support_halfwidth,
)

# Per-output normalisation is skipped below this magnitude to avoid dividing
# by noise when a whole output channel is essentially zero.
SCALE_FLOOR = 1e-14

# Upper bound on temporary elements (queries x points x dims) per evaluation
# chunk; keeps lattice-sized batch evaluations within tens of megabytes.
_EVAL_CHUNK_ELEMENTS = 8_000_000


class SparseGrid:
    """Ordered, duplicate-free collection of sparse-grid points.

    Points are appended in non-decreasing hierarchical level; insertion
    order is part of the grid identity (surplus computation and file
    round-trips preserve it).
    """

    def __init__(self, ndim: int, points: Iterable[MultiIndex] = ()):
        if ndim < 1:
            raise ConfigurationError(f"grid dimension must be >= 1, got {ndim}")
        self.ndim = ndim
        self._points: list[MultiIndex] = []
        self._lookup: dict[MultiIndex, int] = {}
        self.add(points)

    @classmethod
    def isotropic(cls, ndim: int, max_level: int) -> "SparseGrid":
        """Full sparse grid containing every block with level sum <= max_level."""
        if max_level < 0:
            raise ConfigurationError(f"grid level must be >= 0, got {max_level}")
        grid = cls(ndim)
        for total in range(max_level + 1):
            for levels in level_compositions(ndim, total):
                grid.add(points_of_level_vector(levels))
        return grid

    def add(self, points: Iterable[MultiIndex]) -> None:
        for p in points:
            if p.ndim != self.ndim:
                raise ConfigurationError(
                    f"point dimension {p.ndim} does not match grid dimension {self.ndim}"
                )
            if not p.is_valid:
                raise ConfigurationError(f"invalid grid point {p}")
            if p in self._lookup:
                raise ConfigurationError(f"duplicate grid point {p}")
            if self._points and p.level < self._points[-1].level:
                raise ConfigurationError(
                    "points must be added in non-decreasing level order"
                )
            self._lookup[p] = len(self._points)
            self._points.append(p)

    @property
    def points(self) -> tuple[MultiIndex, ...]:
        return tuple(self._points)

    @property
    def max_level(self) -> int:
        return self._points[-1].level if self._points else 0

    def index_of(self, point: MultiIndex) -> int:
        return self._lookup[point]

    def level_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for p in self._points:
            counts[p.level] = counts.get(p.level, 0) + 1
        return counts

    def unit_coords(self) -> np.ndarray:
        if not self._points:
            return np.empty((0, self.ndim))
        return np.array([p.unit_coords() for p in self._points])

    def __len__(self) -> int:
        return len(self._points)

    def __contains__(self, point: MultiIndex) -> bool:
        return point in self._lookup

    def __iter__(self):
        return iter(self._points)


def isotropic_grid(ndim: int, max_level: int) -> SparseGrid:
    """Convenience constructor for the level-``max_level`` isotropic sparse grid."""
    return SparseGrid.isotropic(ndim, max_level)


def _point_arrays(points: list[MultiIndex], ndim: int):
    """Pack per-point levels / unit centers / hat half-widths into arrays."""
    n = len(points)
    levels = np.zeros((n, ndim), dtype=np.int64)
    centers = np.zeros((n, ndim))
    halfw = np.zeros((n, ndim))
    for k, p in enumerate(points):
        levels[k] = p.levels
        centers[k] = [node_coordinate(i, j) for i, j in zip(p.levels, p.positions)]
        halfw[k] = [support_halfwidth(i) for i in p.levels]
    return levels, centers, halfw


class SurrogateModel:
    """Immutable sparse-grid interpolant with vector-valued surpluses.

    Evaluation sums, over every stored point, its surplus vector times the
    product of one-dimensional hats; the root hat is constant so division by
    its infinite half-width contributes a factor of exactly one.
    """

    def __init__(
        self,
        grid: SparseGrid,
        domain: Box,
        surpluses: np.ndarray,
        values: np.ndarray | None = None,
        alpha: float | None = None,
        alpha_mode: str = "relative",
        model_id: str = "",
    ):
        if domain.ndim != grid.ndim:
            raise ConfigurationError("domain dimension does not match grid dimension")
        surpluses = np.asarray(surpluses, dtype=float)
        if surpluses.ndim != 2 or surpluses.shape[0] != len(grid):
            raise ConfigurationError(
                f"surplus array shape {surpluses.shape} does not match grid size {len(grid)}"
            )
        self.grid = grid
        self.domain = domain
        self.n_outputs = surpluses.shape[1]
        self.alpha = alpha
        self.alpha_mode = alpha_mode
        self.model_id = model_id
        self._surplus = surpluses.copy()
        self._surplus.flags.writeable = False
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.shape != surpluses.shape:
                raise ConfigurationError("values array shape must match surpluses")
            values = values.copy()
            values.flags.writeable = False
        self._values = values
        pts = list(grid.points)
        self._levels, self._centers, self._halfw = _point_arrays(pts, grid.ndim)
        self._point_level = np.array([p.level for p in pts], dtype=np.int64)

    # -- introspection -------------------------------------------------

    @property
    def ndim(self) -> int:
        return self.grid.ndim

    @property
    def surpluses(self) -> np.ndarray:
        return self._surplus

    @property
    def values(self) -> np.ndarray | None:
        return self._values

    @property
    def point_levels(self) -> np.ndarray:
        """Hierarchical level of each stored point, aligned with grid order."""
        return self._point_level

    @property
    def max_level(self) -> int:
        return self.grid.max_level

    def __len__(self) -> int:
        return len(self.grid)

    # -- evaluation ----------------------------------------------------

    def _basis_matrix(self, unit_points: np.ndarray) -> np.ndarray:
        """Tensor hat values, shape (n_queries, n_points)."""
        t = 1.0 - np.abs(unit_points[:, None, :] - self._centers[None, :, :]) / self._halfw
        np.maximum(t, 0.0, out=t)
        return t.prod(axis=2)

    def eval_unit(self, unit_points: np.ndarray) -> np.ndarray:
        """Evaluate at unit-cube coordinates, shape (n, ndim) -> (n, n_outputs)."""
        u = np.atleast_2d(np.asarray(unit_points, dtype=float))
        if u.shape[1] != self.ndim:
            raise DomainError(f"query dimension {u.shape[1]} != grid dimension {self.ndim}")
        if np.any(u < 0.0) or np.any(u > 1.0):
            raise DomainError("unit coordinates outside [0, 1]; the interpolant never extrapolates")
        if len(self.grid) == 0:
            return np.zeros((u.shape[0], self.n_outputs))
        out = np.empty((u.shape[0], self.n_outputs))
        chunk = max(1, _EVAL_CHUNK_ELEMENTS // (len(self.grid) * self.ndim))
        for start in range(0, u.shape[0], chunk):
            block = u[start : start + chunk]
            out[start : start + chunk] = self._basis_matrix(block) @ self._surplus
        return out

    def eval_many(self, thetas: np.ndarray) -> np.ndarray:
        """Evaluate at physical points, shape (n, ndim) -> (n, n_outputs)."""
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        lo, hi = self.domain.lower_array, self.domain.upper_array
        if np.any(t < lo) or np.any(t > hi):
            raise DomainError("evaluation point outside the surrogate domain")
        return self.eval_unit(self.domain.to_unit(t))

    def __call__(self, theta) -> np.ndarray:
        """Evaluate at a single physical point, shape (ndim,) -> (n_outputs,)."""
        t = np.asarray(theta, dtype=float)
        if t.shape != (self.ndim,):
            raise DomainError(f"expected point of shape ({self.ndim},), got {t.shape}")
        lo, hi = self.domain.lower_array, self.domain.upper_array
        if np.any(t < lo) or np.any(t > hi):
            raise DomainError("evaluation point outside the surrogate domain")
        if len(self.grid) == 0:
            return np.zeros(self.n_outputs)
        u = self.domain.to_unit(t)
        b = 1.0 - np.abs(u[None, :] - self._centers) / self._halfw
        np.maximum(b, 0.0, out=b)
        return b.prod(axis=1) @ self._surplus

    # -- growth --------------------------------------------------------

    def extended(self, new_points: list[MultiIndex], new_values: np.ndarray) -> "SurrogateModel":
        """New surrogate with one deeper level appended and surpluses computed.

        Surpluses of existing points are unchanged: new points are strictly
        deeper, and a point's surplus reads only levels below its own.
        """
        if not new_points:
            return self
        new_values = np.atleast_2d(np.asarray(new_values, dtype=float))
        if new_values.shape != (len(new_points), self.n_outputs):
            raise IncompleteDataError(
                f"expected values of shape {(len(new_points), self.n_outputs)}, "
                f"got {new_values.shape}"
            )
        if len(self.grid) and min(p.level for p in new_points) <= self.max_level:
            raise ConfigurationError("extension points must be deeper than the current grid")
        if self._values is None:
            raise ConfigurationError("cannot extend a surrogate without recorded values")
        unit = np.array([p.unit_coords() for p in new_points])
        predictions = self.eval_unit(unit)
        new_surplus = new_values - predictions
        grid = SparseGrid(self.ndim, list(self.grid.points) + list(new_points))
        return SurrogateModel(
            grid,
            self.domain,
            np.vstack([self._surplus, new_surplus]),
            values=np.vstack([self._values, new_values]),
            alpha=self.alpha,
            alpha_mode=self.alpha_mode,
            model_id=self.model_id,
        )


def empty_surrogate(
    ndim: int,
    n_outputs: int,
    domain: Box,
    alpha: float | None = None,
    alpha_mode: str = "relative",
    model_id: str = "",
) -> SurrogateModel:
    """Degenerate surrogate with no points; evaluates to the zero vector."""
    return SurrogateModel(
        SparseGrid(ndim),
        domain,
        np.zeros((0, n_outputs)),
        values=np.zeros((0, n_outputs)),
        alpha=alpha,
        alpha_mode=alpha_mode,
        model_id=model_id,
    )


def compute_surpluses(
    grid: SparseGrid,
    values: Mapping[MultiIndex, np.ndarray] | np.ndarray,
    domain: Box | None = None,
    alpha: float | None = None,
    alpha_mode: str = "relative",
    model_id: str = "",
) -> SurrogateModel:
    """Convert recorded grid values into a hierarchical-surplus surrogate.

    ``values`` is either a mapping from grid point to output vector or an
    array aligned with the grid's point order.  Levels are processed in
    ascending order; each batch's surplus is its value minus the partial
    interpolant built from all coarser retained points.
    """
    points = list(grid.points)
    if isinstance(values, Mapping):
        missing = [p for p in points if p not in values]
        if missing:
            raise IncompleteDataError(
                f"values missing for {len(missing)} grid points, first: {missing[0]}"
            )
        rows = [np.atleast_1d(np.asarray(values[p], dtype=float)) for p in points]
        table = np.array(rows) if rows else np.zeros((0, 1))
    else:
        table = np.atleast_2d(np.asarray(values, dtype=float))
        if table.shape[0] != len(points):
            raise IncompleteDataError(
                f"expected {len(points)} value rows, got {table.shape[0]}"
            )
    if domain is None:
        domain = Box.unit(grid.ndim)
    n_outputs = table.shape[1] if table.size else 1
    model = empty_surrogate(
        grid.ndim, n_outputs, domain, alpha=alpha, alpha_mode=alpha_mode, model_id=model_id
    )
    if not points:
        return model
    # Group consecutive points by hierarchical level (grid order guarantees
    # levels are non-decreasing).
    start = 0
    for stop in range(1, len(points) + 1):
        if stop == len(points) or points[stop].level != points[start].level:
            model = model.extended(points[start:stop], table[start:stop])
            start = stop
    return model


def surplus_scales(model: SurrogateModel) -> np.ndarray:
    """Per-output normalisation: max |recorded value| over the grid, floored to 1."""
    if model.values is None or model.values.size == 0:
        return np.ones(model.n_outputs)
    scales = np.abs(model.values).max(axis=0)
    return np.where(scales > SCALE_FLOOR, scales, 1.0)


def refine(model: SurrogateModel, alpha: float, mode: str | None = None) -> list[MultiIndex]:
    """Children of deepest-level points whose surplus magnitude exceeds ``alpha``.

    In ``"relative"`` mode each output channel of a surplus is divided by the
    largest recorded magnitude of that channel before comparison; in
    ``"absolute"`` mode raw magnitudes are compared.  The returned points are
    valid, deduplicated, absent from the grid, and all lie one level deeper;
    the list is empty when every deepest-level surplus is within tolerance.
    """
    if alpha < 0:
        raise ConfigurationError(f"refinement tolerance must be >= 0, got {alpha}")
    mode = mode or model.alpha_mode
    if mode not in ("relative", "absolute"):
        raise ConfigurationError(f"unknown tolerance mode {mode!r}")
    if len(model.grid) == 0:
        return []
    if mode == "relative" and model.values is None:
        raise ConfigurationError("relative refinement requires recorded model values")
    deepest = model.max_level
    mask = model._point_level == deepest
    magnitudes = np.abs(model.surpluses[mask])
    if mode == "relative":
        magnitudes = magnitudes / surplus_scales(model)
    flagged_rows = magnitudes.max(axis=1) > alpha
    deepest_points = [p for p in model.grid.points if p.level == deepest]
    flagged = [p for p, f in zip(deepest_points, flagged_rows) if f]
    children: set[MultiIndex] = set()
    for parent in flagged:
        for child in parent.all_children():
            if child.is_valid and child not in model.grid:
                children.add(child)
    return sorted(children, key=lambda p: (p.levels, p.positions))
